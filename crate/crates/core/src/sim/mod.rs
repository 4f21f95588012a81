//! Deterministic planar Push-T environment.
//!
//! A disc end-effector pushes a T-shaped block on a frictional table. Contact
//! is resolved quasi-statically: the block only moves while it is being
//! pushed, and each push is converted into a body twist through an
//! ellipsoidal limit surface whose radius is the block's radius of gyration.
//! Pusher/block friction decides whether the contact sticks (the block
//! follows the pusher's motion) or slides along the friction-cone edge.

mod expert;
pub mod shape;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point2, Pose2};

pub use expert::{scripted_expert, ExpertConfig};
pub use shape::{TBlock, TBlockSpec};

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Aabb {
    pub const fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn clamp(&self, p: Point2) -> Point2 {
        Point2::new(p.x.clamp(self.x_min, self.x_max), p.y.clamp(self.y_min, self.y_max))
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    fn is_valid(&self) -> bool {
        self.x_min.is_finite()
            && self.y_min.is_finite()
            && self.x_max.is_finite()
            && self.y_max.is_finite()
            && self.x_min <= self.x_max
            && self.y_min <= self.y_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

/// Half-plane split of the workspace by block centroid. Points exactly on the
/// threshold belong to the in-distribution side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdRegion {
    pub axis: Axis,
    pub threshold: f64,
    /// `true`: ID is `coord <= threshold`; `false`: ID is `coord >= threshold`.
    pub id_below: bool,
}

impl IdRegion {
    pub fn is_id(&self, p: Point2) -> bool {
        let v = match self.axis {
            Axis::X => p.x,
            Axis::Y => p.y,
        };
        if self.id_below {
            v <= self.threshold
        } else {
            v >= self.threshold
        }
    }

    /// The part of `b` on the requested side, if it has positive area.
    fn restrict(&self, b: &Aabb, region: Region) -> Option<Aabb> {
        let mut out = *b;
        let keep_below = match region {
            Region::Any => return (b.width() > 0.0 && b.height() > 0.0).then_some(*b),
            Region::Id => self.id_below,
            Region::Ood => !self.id_below,
        };
        let (lo, hi) = match self.axis {
            Axis::X => (&mut out.x_min, &mut out.x_max),
            Axis::Y => (&mut out.y_min, &mut out.y_max),
        };
        if keep_below {
            *hi = hi.min(self.threshold);
        } else {
            *lo = lo.max(self.threshold);
        }
        (out.x_max > out.x_min && out.y_max > out.y_min).then_some(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Id,
    Ood,
    Any,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Region::Id => "id",
            Region::Ood => "ood",
            Region::Any => "any",
        })
    }
}

impl std::str::FromStr for Region {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "id" => Ok(Region::Id),
            "ood" => Ok(Region::Ood),
            "any" => Ok(Region::Any),
            other => Err(Error::config(format!("unknown region '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub workspace: Aabb,
    pub ee_radius: f64,
    pub t_block: TBlockSpec,
    pub target_pose: Pose2,
    /// Seconds per control tick; only used to report durations.
    pub dt: f64,
    /// Maximum end-effector travel per tick.
    pub max_push_speed: f64,
    /// Pusher/block Coulomb coefficient.
    pub contact_friction: f64,
    /// Maximum end-effector travel per contact-resolution substep.
    pub substep: f64,
    pub success_coverage: f64,
    pub max_steps: usize,
    pub id_region: IdRegion,
    /// Where block centroids are drawn at reset (then split by `id_region`).
    pub block_reset_box: Aabb,
    pub ee_reset_box: Aabb,
    /// Stream selector mixed into every reset.
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            workspace: Aabb::new(0.0, 0.0, 512.0, 512.0),
            ee_radius: 15.0,
            t_block: TBlockSpec::default(),
            target_pose: Pose2::new(256.0, 256.0, PI / 4.0),
            dt: 0.1,
            max_push_speed: 10.0,
            contact_friction: 0.5,
            substep: 2.0,
            success_coverage: 0.90,
            max_steps: 300,
            id_region: IdRegion {
                axis: Axis::X,
                threshold: 256.0,
                id_below: true,
            },
            block_reset_box: Aabb::new(100.0, 100.0, 412.0, 412.0),
            ee_reset_box: Aabb::new(50.0, 50.0, 462.0, 462.0),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("sim: {m}")));
        if !self.workspace.is_valid() || self.workspace.width() <= 0.0 || self.workspace.height() <= 0.0 {
            return bad("workspace must be a non-degenerate box");
        }
        if !(self.ee_radius > 0.0) {
            return bad("ee_radius must be > 0");
        }
        if !(self.success_coverage > 0.0 && self.success_coverage <= 1.0) {
            return bad("success_coverage must be in (0, 1]");
        }
        if !(self.max_push_speed > 0.0) || !(self.substep > 0.0) || !(self.dt > 0.0) {
            return bad("max_push_speed, substep and dt must be > 0");
        }
        if !(self.contact_friction >= 0.0) {
            return bad("contact_friction must be >= 0");
        }
        let t = &self.t_block;
        if [t.bar_width, t.bar_height, t.stem_width, t.stem_height]
            .iter()
            .any(|v| !(*v > 0.0))
            || t.stem_width > t.bar_width
        {
            return bad("t_block dimensions must be positive with stem_width <= bar_width");
        }
        if !self.target_pose.is_finite() || !self.workspace.contains(self.target_pose.translation()) {
            return bad("target_pose must lie inside the workspace");
        }
        for (name, b) in [
            ("block_reset_box", &self.block_reset_box),
            ("ee_reset_box", &self.ee_reset_box),
        ] {
            if !b.is_valid()
                || !self.workspace.contains(Point2::new(b.x_min, b.y_min))
                || !self.workspace.contains(Point2::new(b.x_max, b.y_max))
            {
                return bad(&format!("{name} must be a box inside the workspace"));
            }
        }
        if self.max_steps == 0 {
            return bad("max_steps must be >= 1");
        }
        Ok(())
    }

    pub fn block(&self) -> TBlock {
        TBlock::new(self.t_block)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub block_pose: Pose2,
    pub ee_pos: Point2,
    pub step_count: usize,
    /// Per-episode random stream state drawn at reset; `step` never uses it.
    pub rng_state: u64,
}

/// Commanded end-effector position for one control tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action {
    pub target: Point2,
}

impl Action {
    pub fn new(target: Point2) -> Self {
        Self { target }
    }
}

/// A stepper bound to one configuration.
#[derive(Debug, Clone)]
pub struct PushT {
    pub cfg: SimConfig,
    pub block: TBlock,
}

impl PushT {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let block = cfg.block();
        Ok(Self { cfg, block })
    }

    /// Samples an initial state; a pure function of `(cfg, seed, region)`.
    pub fn reset(&self, seed: u64, region: Region) -> Result<SimState> {
        let cfg = &self.cfg;
        let bbox = cfg
            .id_region
            .restrict(&cfg.block_reset_box, region)
            .ok_or(Error::EmptyResetRegion)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(cfg.seed);
        let centroid = loop {
            let p = Point2::new(
                rng.random_range(bbox.x_min..=bbox.x_max),
                rng.random_range(bbox.y_min..=bbox.y_max),
            );
            // the restricted box is closed on the threshold, which may
            // belong to the other side
            let ok = match region {
                Region::Any => true,
                Region::Id => cfg.id_region.is_id(p),
                Region::Ood => !cfg.id_region.is_id(p),
            };
            if ok {
                break p;
            }
        };
        let theta = PI - rng.random::<f64>() * 2.0 * PI;
        let block_pose = Pose2::new(centroid.x, centroid.y, theta);
        let eb = cfg.ee_reset_box;
        let ee_pos = loop {
            let p = Point2::new(
                rng.random_range(eb.x_min..=eb.x_max),
                rng.random_range(eb.y_min..=eb.y_max),
            );
            if self.block.query(&block_pose, p).signed_distance >= cfg.ee_radius {
                break p;
            }
        };
        Ok(SimState {
            block_pose,
            ee_pos,
            step_count: 0,
            rng_state: rng.random(),
        })
    }

    /// Advances one control tick toward `action.target`.
    pub fn step(&self, s: &SimState, action: &Action) -> SimState {
        let cfg = &self.cfg;
        let target = cfg.workspace.clamp(action.target);
        let mut next = s.clone();
        next.step_count += 1;
        let delta = target - s.ee_pos;
        let dist = delta.norm().min(cfg.max_push_speed);
        if dist > 0.0 {
            let dir = delta.normalized();
            let n_sub = (dist / cfg.substep).ceil().max(1.0) as usize;
            let inc = dist / n_sub as f64;
            for _ in 0..n_sub {
                next.ee_pos = cfg.workspace.clamp(next.ee_pos + dir * inc);
                self.resolve_contact(&mut next, dir);
            }
        }
        next
    }

    fn resolve_contact(&self, s: &mut SimState, motion: Point2) {
        let cfg = &self.cfg;
        let r = cfg.ee_radius;
        let rho_sq = self.block.gyration_sq();
        for _ in 0..8 {
            let q = self.block.query(&s.block_pose, s.ee_pos);
            let depth = r - q.signed_distance;
            if depth <= 1e-9 {
                break;
            }
            let inward = -q.normal;
            let push = push_direction(motion, inward, cfg.contact_friction);
            let arm = q.closest - s.block_pose.translation();
            let torque = arm.cross(push);
            // contact-normal displacement per unit of limit-surface twist
            let mut rate = push.dot(inward) + torque * arm.cross(inward) / rho_sq;
            let (push, torque) = if rate > 1e-9 {
                (push, torque)
            } else {
                let t = arm.cross(inward);
                rate = 1.0 + t * t / rho_sq;
                (inward, t)
            };
            let scale = depth / rate;
            let c = cfg.workspace.clamp(s.block_pose.translation() + push * scale);
            s.block_pose = Pose2::new(c.x, c.y, s.block_pose.theta + scale * torque / rho_sq);
        }
        // whatever the block could not absorb (walls, linearization) the
        // end-effector gives back
        for _ in 0..8 {
            let q = self.block.query(&s.block_pose, s.ee_pos);
            let depth = r - q.signed_distance;
            if depth <= 1e-9 {
                break;
            }
            s.ee_pos = cfg.workspace.clamp(s.ee_pos + q.normal * (depth + 1e-9));
        }
    }

    /// Overlap depth between the end-effector disc and the block (0 when apart).
    pub fn penetration(&self, s: &SimState) -> f64 {
        (self.cfg.ee_radius - self.block.query(&s.block_pose, s.ee_pos).signed_distance).max(0.0)
    }

    pub fn coverage(&self, s: &SimState) -> f64 {
        coverage_with(&self.block, &s.block_pose, &self.cfg.target_pose)
    }

    pub fn is_success(&self, s: &SimState) -> bool {
        self.coverage(s) >= self.cfg.success_coverage
    }

    pub fn region_of(&self, p: &Pose2) -> Region {
        region_of(p, &self.cfg)
    }
}

/// Direction the contact point is driven, given pusher motion and the inward
/// contact normal.
fn push_direction(motion: Point2, inward: Point2, mu: f64) -> Point2 {
    let along = motion.dot(inward);
    if along <= 0.0 || mu <= 0.0 {
        return inward;
    }
    let tangential = motion - inward * along;
    let t = tangential.norm();
    if t <= mu * along {
        motion.normalized()
    } else {
        (inward + tangential * (mu / t)).normalized()
    }
}

pub fn coverage_with(block: &TBlock, pose: &Pose2, target: &Pose2) -> f64 {
    (block.intersection_area(pose, target) / block.area()).clamp(0.0, 1.0)
}

/// Fraction of the block's area overlapping its footprint at the target pose.
pub fn coverage(s: &SimState, cfg: &SimConfig) -> f64 {
    coverage_with(&cfg.block(), &s.block_pose, &cfg.target_pose)
}

pub fn region_of(p: &Pose2, cfg: &SimConfig) -> Region {
    if cfg.id_region.is_id(p.translation()) {
        Region::Id
    } else {
        Region::Ood
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> PushT {
        PushT::new(SimConfig::default()).unwrap()
    }

    #[test]
    fn reset_is_deterministic_and_respects_region() {
        let e = env();
        for seed in 0..50 {
            assert_eq!(e.reset(seed, Region::Id).unwrap(), e.reset(seed, Region::Id).unwrap());
            let id = e.reset(seed, Region::Id).unwrap();
            assert!(id.block_pose.x <= 256.0);
            let ood = e.reset(seed, Region::Ood).unwrap();
            assert!(ood.block_pose.x > 256.0);
            assert!(e.penetration(&ood) == 0.0);
        }
    }

    #[test]
    fn empty_region_is_an_error() {
        let mut cfg = SimConfig::default();
        cfg.id_region.threshold = 50.0;
        let e = PushT::new(cfg).unwrap();
        assert!(matches!(e.reset(0, Region::Id), Err(Error::EmptyResetRegion)));
        assert!(e.reset(0, Region::Ood).is_ok());
    }

    #[test]
    fn region_boundary_goes_to_id() {
        let cfg = SimConfig::default();
        assert_eq!(region_of(&Pose2::new(100.0, 256.0, 0.0), &cfg), Region::Id);
        assert_eq!(region_of(&Pose2::new(400.0, 256.0, 0.0), &cfg), Region::Ood);
        assert_eq!(region_of(&Pose2::new(256.0, 256.0, 0.0), &cfg), Region::Id);
    }

    #[test]
    fn no_contact_leaves_block() {
        let e = env();
        let s = SimState {
            block_pose: Pose2::new(300.0, 300.0, 0.0),
            ee_pos: Point2::new(50.0, 50.0),
            step_count: 0,
            rng_state: 0,
        };
        let n = e.step(&s, &Action::new(Point2::new(60.0, 50.0)));
        assert_eq!(n.block_pose, s.block_pose);
        assert_eq!(n.ee_pos, Point2::new(60.0, 50.0));
        assert_eq!(n.step_count, 1);
    }

    #[test]
    fn speed_limit_and_clipping() {
        let e = env();
        let s = SimState {
            block_pose: Pose2::new(300.0, 300.0, 0.0),
            ee_pos: Point2::new(505.0, 50.0),
            step_count: 0,
            rng_state: 0,
        };
        let n = e.step(&s, &Action::new(Point2::new(900.0, 50.0)));
        assert_eq!(n.ee_pos, Point2::new(512.0, 50.0));
        let n = e.step(&s, &Action::new(Point2::new(405.0, 50.0)));
        assert!((n.ee_pos.x - 495.0).abs() < 1e-9);
    }

    #[test]
    fn coverage_identity_and_disjoint() {
        let cfg = SimConfig::default();
        let mut s = env().reset(0, Region::Any).unwrap();
        s.block_pose = cfg.target_pose;
        assert!((coverage(&s, &cfg) - 1.0).abs() < 1e-12);
        s.block_pose = Pose2::new(20.0, 20.0, 0.0);
        assert_eq!(coverage(&s, &cfg), 0.0);
    }

    #[test]
    fn ood_resets_are_uniform() {
        let e = env();
        let (x0, x1, y0, y1) = (256.0, 412.0, 100.0, 412.0);
        let mut counts = [[0usize; 4]; 4];
        let n = 1000;
        for seed in 0..n {
            let p = e.reset(seed, Region::Ood).unwrap().block_pose;
            let i = (((p.x - x0) / (x1 - x0) * 4.0) as usize).min(3);
            let j = (((p.y - y0) / (y1 - y0) * 4.0) as usize).min(3);
            counts[i][j] += 1;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = counts
            .iter()
            .flatten()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 99th percentile of chi-square with 15 degrees of freedom
        assert!(chi2 < 30.578, "chi2 = {chi2}");
    }

    #[test]
    fn centered_push_on_bar_edge_translates() {
        let e = env();
        let block = e.block.clone();
        let top = block.outline().iter().map(|p| p.y).fold(f64::MIN, f64::max);
        let s = SimState {
            block_pose: Pose2::new(256.0, 256.0, 0.0),
            ee_pos: Point2::new(256.0, 256.0 + top + 15.0 + 5.0),
            step_count: 0,
            rng_state: 0,
        };
        let mut cur = s.clone();
        for _ in 0..4 {
            cur = e.step(&cur, &Action::new(cur.ee_pos - Point2::new(0.0, 10.0)));
        }
        let moved = cur.block_pose.translation() - s.block_pose.translation();
        assert!(moved.y < -20.0, "{moved:?}");
        assert!(moved.x.abs() < 1e-6);
        assert!(cur.block_pose.theta.abs() < 0.01);
    }

    #[test]
    fn coverage_matches_monte_carlo() {
        let cfg = SimConfig::default();
        let block = cfg.block();
        let target = cfg.target_pose;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for offset in [Point2::new(15.0, 0.0), Point2::new(0.0, 60.0)] {
            let pose = Pose2::new(target.x + offset.x, target.y + offset.y, target.theta);
            let r = block.radius();
            let (mut inside, mut both) = (0usize, 0usize);
            for _ in 0..1_000_000 {
                let p = Point2::new(pose.x + rng.random_range(-r..r), pose.y + rng.random_range(-r..r));
                if block.contains(&pose, p) {
                    inside += 1;
                    if block.contains(&target, p) {
                        both += 1;
                    }
                }
            }
            let mc = both as f64 / inside as f64;
            let exact = coverage_with(&block, &pose, &target);
            assert!((mc - exact).abs() < 0.01, "{offset:?}: {mc} vs {exact}");
        }
    }

    #[test]
    fn step_is_deterministic() {
        let e = env();
        let s = e.reset(11, Region::Any).unwrap();
        let a = Action::new(s.block_pose.translation());
        assert_eq!(e.step(&s, &a), e.step(&s, &a));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn steps_never_penetrate(seed in 0u64..10_000, targets in proptest::collection::vec((-50.0..560.0f64, -50.0..560.0f64), 1..40)) {
                let e = env();
                let mut s = e.reset(seed, Region::Any).unwrap();
                // aim half the actions at the block so contact actually happens
                for (i, (x, y)) in targets.into_iter().enumerate() {
                    let t = if i % 2 == 0 { s.block_pose.translation() } else { Point2::new(x, y) };
                    s = e.step(&s, &Action::new(t));
                    prop_assert!(e.penetration(&s) <= 1e-6);
                    prop_assert!(e.cfg.workspace.contains(s.ee_pos));
                    prop_assert!(e.cfg.workspace.contains(s.block_pose.translation()));
                }
            }
        }
    }
}
