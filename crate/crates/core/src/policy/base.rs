use serde::{Deserialize, Serialize};

use super::knn::{Group, KnnIndex};
use super::{points_to_actions, BasePolicy};
use crate::dataset::{Episode, Observation};
use crate::error::{Error, Result};
use crate::geom::{Point2, Pose2};
use crate::sim::Action;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseConfig {
    /// Actions returned per query.
    pub horizon: usize,
    pub k: usize,
    /// Weight of proprioception relative to the keypoints.
    pub proprio_weight: f64,
    /// Weight of the end-effector position expressed in the block frame.
    pub relative_proprio_weight: f64,
    /// A retrieved window is re-anchored to the current block pose when the
    /// matched keypoints lie within this RMS distance of the query; beyond
    /// it the window is replayed verbatim.
    pub align_radius: f64,
}

impl Default for BaseConfig {
    fn default() -> Self {
        Self {
            horizon: 16,
            k: 1,
            proprio_weight: 0.25,
            relative_proprio_weight: 1.0,
            align_radius: 52.0,
        }
    }
}

impl BaseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0
            || self.k == 0
            || !(self.proprio_weight >= 0.0)
            || !(self.relative_proprio_weight >= 0.0)
            || !(self.align_radius >= 0.0)
        {
            return Err(Error::config(
                "base policy needs horizon >= 1, k >= 1 and non-negative weights",
            ));
        }
        Ok(())
    }
}

/// Returns the action window that followed the most similar demonstrated
/// `(keypoints, proprioception)` state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnBasePolicy {
    pub horizon: usize,
    pub n_keypoints: usize,
    pub align_radius: f64,
    pub index: KnnIndex,
    /// Block pose and flattened keypoints of each indexed step.
    pub anchors: Vec<Pose2>,
    pub anchor_keypoints: Vec<f64>,
}

fn features(obs: &Observation, proprio: Point2, out: &mut Vec<f64>) {
    obs.keypoints.flatten_into(out);
    let rel = obs.obj_pose.inverse().apply(proprio);
    out.extend([proprio.x, proprio.y, rel.x, rel.y]);
}

/// Indexes every full action window of every demonstration.
pub fn train_base(demos: &[Episode], cfg: &BaseConfig) -> Result<KnnBasePolicy> {
    cfg.validate()?;
    let n = demos
        .iter()
        .find_map(|e| e.steps.first())
        .map(|s| s.obs.keypoints.len())
        .ok_or_else(|| Error::invalid("no demonstrations to train the base policy on"))?;
    let l = cfg.horizon;
    let mut feats = Vec::new();
    let mut outs = Vec::new();
    let mut anchors = Vec::new();
    let mut anchor_keypoints = Vec::new();
    for ep in demos {
        if ep.steps.iter().any(|s| s.obs.keypoints.len() != n) {
            return Err(Error::invalid("demonstrations disagree on the keypoint count"));
        }
        for start in 0..(ep.steps.len() + 1).saturating_sub(l) {
            let s = &ep.steps[start];
            features(&s.obs, s.proprio, &mut feats);
            anchors.push(s.obs.obj_pose);
            s.obs.keypoints.flatten_into(&mut anchor_keypoints);
            for a in &ep.steps[start..start + l] {
                outs.extend([a.action.target.x, a.action.target.y]);
            }
        }
    }
    if feats.is_empty() {
        return Err(Error::invalid(format!("no demonstration is at least {l} steps long")));
    }
    let groups = [
        Group {
            len: 2 * n,
            weight: 1.0,
        },
        Group {
            len: 2,
            weight: cfg.proprio_weight,
        },
        Group {
            len: 2,
            weight: cfg.relative_proprio_weight,
        },
    ];
    Ok(KnnBasePolicy {
        horizon: l,
        n_keypoints: n,
        align_radius: cfg.align_radius,
        index: KnnIndex::build(feats, outs, &groups, 2 * l, cfg.k)?,
        anchors,
        anchor_keypoints,
    })
}

impl BasePolicy for KnnBasePolicy {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn act(&self, obs: &Observation, proprio: Point2) -> Vec<Action> {
        let mut q = Vec::with_capacity(self.index.dim);
        features(obs, proprio, &mut q);
        let dim = 2 * self.n_keypoints;
        let mut kp = Vec::with_capacity(dim);
        obs.keypoints.flatten_into(&mut kp);
        let limit = self.align_radius * self.align_radius * self.n_keypoints as f64;
        let nb = self.index.neighbors(&q);
        let mut sum = vec![0.0; self.index.out_dim];
        for &i in &nb {
            let anchor = &self.anchor_keypoints[i * dim..(i + 1) * dim];
            let sq: f64 = anchor.iter().zip(&kp).map(|(a, b)| (a - b) * (a - b)).sum();
            let g = if sq <= limit && self.anchors[i] != obs.obj_pose {
                obs.obj_pose.compose(&self.anchors[i].inverse())
            } else {
                Pose2::default()
            };
            for (o, c) in sum.chunks_exact_mut(2).zip(self.index.output(i).chunks_exact(2)) {
                let p = g.apply(Point2::new(c[0], c[1]));
                o[0] += p.x;
                o[1] += p.y;
            }
        }
        for v in &mut sum {
            *v /= nb.len() as f64;
        }
        points_to_actions(&sum)
    }

    fn fingerprint(&self) -> String {
        crate::io::digest(&[self])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Step;
    use crate::geom::KeypointSet;

    fn demo(offset: f64, len: usize) -> Episode {
        Episode {
            steps: (0..len)
                .map(|i| {
                    let t = offset + i as f64;
                    Step {
                        obs: Observation {
                            keypoints: KeypointSet::new(vec![Point2::new(t, 1.0), Point2::new(2.0, t * 0.5)]),
                            obj_pose: Pose2::new(t, 0.0, 0.0),
                        },
                        action: Action::new(Point2::new(t, -t)),
                        proprio: Point2::new(3.0 * t, 1.0),
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn memorizes_windows() {
        let demos = vec![demo(0.0, 10), demo(100.0, 6)];
        let cfg = BaseConfig {
            horizon: 4,
            ..BaseConfig::default()
        };
        let p = train_base(&demos, &cfg).unwrap();
        assert_eq!(p.index.len(), 7 + 3);
        for ep in &demos {
            for start in 0..=ep.steps.len() - 4 {
                let s = &ep.steps[start];
                let want: Vec<Action> = ep.steps[start..start + 4].iter().map(|s| s.action).collect();
                assert_eq!(p.act(&s.obs, s.proprio), want);
            }
        }
    }

    #[test]
    fn rejects_empty_and_short() {
        let cfg = BaseConfig::default();
        assert!(train_base(&[], &cfg).is_err());
        assert!(train_base(&[demo(0.0, 3)], &cfg).is_err());
    }

    #[test]
    fn nearby_queries_reanchor_and_distant_ones_replay() {
        let demos = vec![demo(0.0, 10)];
        let cfg = BaseConfig {
            horizon: 4,
            align_radius: 5.0,
            ..BaseConfig::default()
        };
        let p = train_base(&demos, &cfg).unwrap();
        let s = &demos[0].steps[2];
        let stored: Vec<Action> = demos[0].steps[2..6].iter().map(|s| s.action).collect();
        for shift in [Point2::new(1.0, -0.5), Point2::new(40.0, 0.0)] {
            let g = Pose2::from_translation(shift);
            let obs = Observation {
                keypoints: s.obs.keypoints.translated(shift),
                obj_pose: g.compose(&s.obs.obj_pose),
            };
            let got = p.act(&obs, g.apply(s.proprio));
            if shift.norm() <= cfg.align_radius {
                for (a, b) in got.iter().zip(&stored) {
                    assert!(a.target.distance(b.target + shift) < 1e-9);
                }
            } else {
                let verbatim = (0..p.index.len()).any(|i| points_to_actions(p.index.output(i)) == got);
                assert!(verbatim, "far query should replay a stored window");
            }
        }
    }
}
