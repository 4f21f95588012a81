//! Greedy model-based pushing controller used to generate demonstrations.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Action, PushT, SimState};
use crate::geom::{wrap_angle, Point2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpertConfig {
    /// Spacing of candidate contact points along the outline.
    pub contact_spacing: f64,
    /// Clearance kept between the disc and the block when lining up a push.
    pub standoff_gap: f64,
    /// Clearance used while circling the block.
    pub orbit_clearance: f64,
    /// Longest push planned from one decision.
    pub max_push: f64,
    /// Weight of the orientation error, in units of the block radius.
    pub angle_weight: f64,
    /// Uniform action noise radius (0 disables).
    pub noise: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            contact_spacing: 6.0,
            standoff_gap: 3.0,
            orbit_clearance: 10.0,
            max_push: 40.0,
            angle_weight: 0.5,
            noise: 0.0,
        }
    }
}

struct Candidate {
    contact: Point2,
    normal: Point2,
    push: f64,
    score: f64,
    /// Next point to head for on the way to the standoff.
    waypoint: Point2,
}

/// Shortest collision-free routes from the end-effector around the block,
/// through the block's inflated outline vertices.
struct Roadmap {
    nodes: Vec<Point2>,
    /// Path length from the end-effector to each node.
    dist: Vec<f64>,
    /// First waypoint on the path to each node.
    first: Vec<Point2>,
}

impl Roadmap {
    fn build(env: &PushT, s: &SimState, cfg: &ExpertConfig) -> Self {
        let r = env.cfg.ee_radius;
        let nodes = env.block.inflated_vertices(&s.block_pose, r + cfg.standoff_gap);
        let n = nodes.len();
        let start = s.ee_pos;
        let mut dist = vec![f64::INFINITY; n];
        let mut first = vec![start; n];
        for i in 0..n {
            if start_clear(env, s, nodes[i]) {
                dist[i] = start.distance(nodes[i]);
                first[i] = nodes[i];
            }
        }
        let mut edge = vec![vec![f64::INFINITY; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                if clear(env, s, nodes[i], nodes[j]) {
                    let d = nodes[i].distance(nodes[j]);
                    edge[i][j] = d;
                    edge[j][i] = d;
                }
            }
        }
        let mut done = vec![false; n];
        for _ in 0..n {
            let Some(u) = (0..n)
                .filter(|&i| !done[i] && dist[i].is_finite())
                .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
            else {
                break;
            };
            done[u] = true;
            for v in 0..n {
                let alt = dist[u] + edge[u][v];
                if alt < dist[v] {
                    dist[v] = alt;
                    first[v] = first[u];
                }
            }
        }
        Self { nodes, dist, first }
    }

    /// Travel length and first waypoint toward `goal`, if reachable.
    fn route(&self, env: &PushT, s: &SimState, goal: Point2) -> Option<(f64, Point2)> {
        if start_clear(env, s, goal) {
            return Some((s.ee_pos.distance(goal), goal));
        }
        let mut best: Option<(f64, Point2)> = None;
        for (i, &node) in self.nodes.iter().enumerate() {
            if !self.dist[i].is_finite() {
                continue;
            }
            let d = self.dist[i] + node.distance(goal);
            if best.is_none_or(|(bd, _)| d < bd) && clear(env, s, node, goal) {
                best = Some((d, self.first[i]));
            }
        }
        best
    }
}

fn clear(env: &PushT, s: &SimState, a: Point2, b: Point2) -> bool {
    env.block.segment_distance(&s.block_pose, a, b) >= env.cfg.ee_radius + 0.5
}

/// Like [`clear`], but tolerates starting closer than the margin as long as
/// the segment never gets closer than the start.
fn start_clear(env: &PushT, s: &SimState, b: Point2) -> bool {
    let here = env.block.query(&s.block_pose, s.ee_pos).signed_distance;
    let need = (env.cfg.ee_radius + 0.5).min(here - 1e-6);
    env.block.segment_distance(&s.block_pose, s.ee_pos, b) >= need
}

/// One tick of the scripted expert.
///
/// Each candidate contact on the outline predicts the block twist a straight
/// push would produce; the controller picks the best error reduction per
/// tick (travel to the contact included), routes around the block to line up
/// behind it, and pushes.
pub fn scripted_expert<R: Rng + ?Sized>(env: &PushT, s: &SimState, cfg: &ExpertConfig, rng: &mut R) -> Action {
    let hold = Action::new(s.ee_pos);
    if env.is_success(s) {
        return hold;
    }
    let Some(best) = best_candidate(env, s, cfg) else {
        return hold;
    };
    let sim = &env.cfg;
    let touch = best.contact + best.normal * sim.ee_radius;
    let mut target = if s.ee_pos.distance(touch) < cfg.standoff_gap + 1.5 {
        touch - best.normal * best.push.min(sim.max_push_speed)
    } else {
        best.waypoint
    };
    if cfg.noise > 0.0 {
        let a = rng.random::<f64>() * 2.0 * PI;
        let m = cfg.noise * rng.random::<f64>().sqrt();
        target = target + Point2::new(a.cos(), a.sin()) * m;
    }
    Action::new(sim.workspace.clamp(target))
}

fn best_candidate(env: &PushT, s: &SimState, cfg: &ExpertConfig) -> Option<Candidate> {
    let sim = &env.cfg;
    let block = &env.block;
    let pose = s.block_pose;
    let center = pose.translation();
    let r = sim.ee_radius;
    let rho_sq = block.gyration_sq();
    let w = cfg.angle_weight * block.radius();
    let err_p = sim.target_pose.translation() - center;
    let err_t = wrap_angle(sim.target_pose.theta - pose.theta);
    let err0 = err_p.norm() + w * err_t.abs();
    let inset = crate::sim::Aabb::new(
        sim.workspace.x_min + r,
        sim.workspace.y_min + r,
        sim.workspace.x_max - r,
        sim.workspace.y_max - r,
    );
    let roadmap = Roadmap::build(env, s, cfg);

    let outline = block.outline();
    let mut best: Option<Candidate> = None;
    for i in 0..outline.len() {
        let a = outline[i];
        let b = outline[(i + 1) % outline.len()];
        let edge = b - a;
        let len = edge.norm();
        let n_body = Point2::new(edge.y, -edge.x) * (1.0 / len);
        let count = (len / cfg.contact_spacing).floor().max(1.0) as usize;
        for j in 0..count {
            let local = a + edge * ((j as f64 + 0.5) / count as f64);
            let contact = pose.apply(local);
            let normal = pose.apply_vector(n_body);
            let standoff = contact + normal * (r + cfg.standoff_gap);
            if !inset.contains(standoff) || block.query(&pose, standoff).signed_distance < r + cfg.standoff_gap - 1e-6 {
                continue;
            }
            let inward = -normal;
            let arm = contact - center;
            let k = arm.cross(inward);
            let denom = 1.0 + k * k / rho_sq;
            let v = inward * (1.0 / denom);
            let omega = k / (rho_sq * denom);
            let den = v.norm_sq() + w * w * omega * omega;
            let push = ((err_p.dot(v) + w * w * err_t * omega) / den).clamp(0.0, cfg.max_push);
            if push < 0.5 {
                continue;
            }
            let err1 = (err_p - v * push).norm() + w * (err_t - omega * push).abs();
            let gain = err0 - err1;
            if gain <= 0.0 {
                continue;
            }
            // upper bound on the score; skip the routing query when it cannot win
            let optimistic = gain / (push / sim.max_push_speed + 1.0);
            if best.as_ref().is_some_and(|c| optimistic <= c.score) {
                continue;
            }
            let touch = contact + normal * r;
            let (travel, waypoint) = if s.ee_pos.distance(touch) < cfg.standoff_gap + 1.5 {
                (0.0, standoff)
            } else {
                match roadmap.route(env, s, standoff) {
                    Some(r) => r,
                    None => continue,
                }
            };
            let ticks = (travel + push) / sim.max_push_speed + 1.0;
            let score = gain / ticks;
            if best.as_ref().is_none_or(|c| score > c.score) {
                best = Some(Candidate {
                    contact,
                    normal,
                    push,
                    score,
                    waypoint,
                });
            }
        }
    }
    best
}
