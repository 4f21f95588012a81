use serde::{Deserialize, Serialize};

use super::knn::{Group, KnnIndex};
use super::{points_to_actions, InversePolicy};
use crate::dataset::{zero_out, Sequence, ZeroedSequence};
use crate::error::{Error, Result};
use crate::geom::{KeypointSet, Point2, Pose2};
use crate::planner::RecoveryTrajectory;
use crate::sim::Action;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InverseConfig {
    pub k: usize,
    /// Weight of the starting proprioception relative to the keypoint
    /// trajectory.
    pub proprio_weight: f64,
    /// Express training windows and queries in the object frame. Turning
    /// this off keeps everything in world coordinates (ablation).
    pub zero_out: bool,
}

impl Default for InverseConfig {
    fn default() -> Self {
        Self {
            k: 1,
            proprio_weight: 2.0,
            zero_out: true,
        }
    }
}

impl InverseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || !(self.proprio_weight >= 0.0) {
            return Err(Error::config("inverse policy needs k >= 1 and proprio_weight >= 0"));
        }
        Ok(())
    }
}

/// Training tuples for the inverse policy: zeroed windows, or the raw
/// windows under an identity frame when `zero_out` is off.
pub fn inverse_training_set(windows: &[Sequence], zero: bool) -> Vec<ZeroedSequence> {
    windows
        .iter()
        .map(|s| if zero { zero_out(s) } else { s.unzeroed() })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnInversePolicy {
    pub horizon: usize,
    pub n_keypoints: usize,
    pub zero_out: bool,
    pub index: KnnIndex,
}

fn features(keypoints: &[KeypointSet], proprio0: Point2, out: &mut Vec<f64>) {
    for k in keypoints {
        k.flatten_into(out);
    }
    out.push(proprio0.x);
    out.push(proprio0.y);
}

pub fn train_inverse(seqs: &[ZeroedSequence], cfg: &InverseConfig) -> Result<KnnInversePolicy> {
    cfg.validate()?;
    let first = seqs
        .first()
        .ok_or_else(|| Error::invalid("no sequences to train the inverse policy on"))?;
    let l = first.len();
    let n = first.keypoints_seq.first().map_or(0, |k| k.len());
    if l == 0 || n == 0 {
        return Err(Error::invalid("empty training sequence"));
    }
    let mut feats = Vec::with_capacity(seqs.len() * (2 * n * l + 2));
    let mut outs = Vec::with_capacity(seqs.len() * 2 * l);
    for s in seqs {
        if s.len() != l || s.actions_seq.len() != l || s.keypoints_seq.iter().any(|k| k.len() != n) {
            return Err(Error::invalid(format!(
                "inconsistent sequence shape: expected L={l}, n={n}"
            )));
        }
        features(&s.keypoints_seq, s.proprio0, &mut feats);
        for a in &s.actions_seq {
            outs.push(a.target.x);
            outs.push(a.target.y);
        }
    }
    let groups = [
        Group {
            len: 2 * n * l,
            weight: 1.0,
        },
        Group {
            len: 2,
            weight: cfg.proprio_weight,
        },
    ];
    Ok(KnnInversePolicy {
        horizon: l,
        n_keypoints: n,
        zero_out: cfg.zero_out,
        index: KnnIndex::build(feats, outs, &groups, 2 * l, cfg.k)?,
    })
}

impl InversePolicy for KnnInversePolicy {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn n_keypoints(&self) -> usize {
        self.n_keypoints
    }

    fn zero_out(&self) -> bool {
        self.zero_out
    }

    fn act_frame(&self, keypoints: &[KeypointSet], proprio0: Point2) -> Vec<Action> {
        let mut q = Vec::with_capacity(self.index.dim);
        features(keypoints, proprio0, &mut q);
        points_to_actions(&self.index.predict(&q))
    }

    fn fingerprint(&self) -> String {
        crate::io::digest(&[self])
    }
}

/// World-frame actions that should move the object along `plan`.
///
/// The plan and proprioception are mapped into the current object frame,
/// the policy is queried there, and its actions are mapped back.
pub fn inverse_act<P: InversePolicy + ?Sized>(
    p: &P,
    plan: &RecoveryTrajectory,
    obj_pose: &Pose2,
    proprio: Point2,
) -> Vec<Action> {
    let frame = if p.zero_out() { *obj_pose } else { Pose2::IDENTITY };
    let inv = frame.inverse();
    let local: Vec<KeypointSet> = plan.frames.iter().map(|k| k.transformed(&inv)).collect();
    p.act_frame(&local, inv.apply(proprio))
        .into_iter()
        .map(|a| Action::new(frame.apply(a.target)))
        .collect()
}
