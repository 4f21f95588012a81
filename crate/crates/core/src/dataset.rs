//! Demonstration episodes, the keypoint recovery dataset, fixed-length
//! sequence windows, and object-frame normalization ("zero-out").

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{transform_keypoints, KeypointSet, Point2, Pose2};
use crate::sim::Action;

/// What a policy sees at one tick: object keypoints plus the tracked object
/// pose (ground truth from the simulator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub keypoints: KeypointSet,
    pub obj_pose: Pose2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub obs: Observation,
    pub action: Action,
    pub proprio: Point2,
}

/// One demonstration: `(observation, action, proprioception)` per tick.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Episode {
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecStep {
    pub keypoints: KeypointSet,
    pub obj_pose: Pose2,
    pub action: Action,
    pub proprio: Point2,
}

/// An episode re-expressed for recovery: keypoints regenerated from the
/// object pose with a fixed template.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RecEpisode {
    pub steps: Vec<RecStep>,
}

/// `L` consecutive ticks of one episode, in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub keypoints: Vec<KeypointSet>,
    pub actions: Vec<Action>,
    /// Proprioception at the first tick.
    pub proprio0: Point2,
    /// Object pose at the first tick.
    pub frame: Pose2,
}

/// A [`Sequence`] expressed in the frame of its first object pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroedSequence {
    pub keypoints_seq: Vec<KeypointSet>,
    pub actions_seq: Vec<Action>,
    pub proprio0: Point2,
    /// Pose that maps the zeroed data back to the world.
    pub source_frame: Pose2,
}

impl ZeroedSequence {
    pub fn len(&self) -> usize {
        self.keypoints_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints_seq.is_empty()
    }

    /// Maps everything back through `source_frame`.
    pub fn restore(&self) -> Sequence {
        let g = &self.source_frame;
        Sequence {
            keypoints: self.keypoints_seq.iter().map(|k| k.transformed(g)).collect(),
            actions: self
                .actions_seq
                .iter()
                .map(|a| Action::new(g.apply(a.target)))
                .collect(),
            proprio0: g.apply(self.proprio0),
            frame: *g,
        }
    }
}

impl Sequence {
    /// Applies a rigid motion to every quantity, including the frame.
    pub fn transformed(&self, g: &Pose2) -> Sequence {
        Sequence {
            keypoints: self.keypoints.iter().map(|k| k.transformed(g)).collect(),
            actions: self.actions.iter().map(|a| Action::new(g.apply(a.target))).collect(),
            proprio0: g.apply(self.proprio0),
            frame: g.compose(&self.frame),
        }
    }

    /// The sequence left in world coordinates, packaged like a zeroed one
    /// with an identity source frame. Used by the non-normalized ablation.
    pub fn unzeroed(&self) -> ZeroedSequence {
        ZeroedSequence {
            keypoints_seq: self.keypoints.clone(),
            actions_seq: self.actions.clone(),
            proprio0: self.proprio0,
            source_frame: Pose2::IDENTITY,
        }
    }
}

/// Regenerates keypoints from each step's object pose.
pub fn build_recovery_dataset(demos: &[Episode], template: &KeypointSet) -> Result<Vec<RecEpisode>> {
    if demos.is_empty() {
        return Err(Error::invalid("no demonstrations to build a recovery dataset from"));
    }
    Ok(demos
        .iter()
        .map(|ep| RecEpisode {
            steps: ep
                .steps
                .iter()
                .map(|s| RecStep {
                    keypoints: transform_keypoints(&s.obs.obj_pose, template),
                    obj_pose: s.obs.obj_pose,
                    action: s.action,
                    proprio: s.proprio,
                })
                .collect(),
        })
        .collect())
}

/// Windows pulled from a set of episodes, plus how many episodes were too
/// short to contribute any.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Windows {
    pub sequences: Vec<Sequence>,
    pub skipped_episodes: usize,
}

/// Every length-`len` window (stride 1) inside each episode. Windows never
/// cross episode boundaries.
pub fn extract_sequences(rec: &[RecEpisode], len: usize) -> Result<Windows> {
    if len == 0 {
        return Err(Error::invalid("sequence length must be >= 1"));
    }
    let mut out = Windows::default();
    for ep in rec {
        let n = ep.steps.len();
        if n < len {
            out.skipped_episodes += 1;
            continue;
        }
        for start in 0..=(n - len) {
            let w = &ep.steps[start..start + len];
            out.sequences.push(Sequence {
                keypoints: w.iter().map(|s| s.keypoints.clone()).collect(),
                actions: w.iter().map(|s| s.action).collect(),
                proprio0: w[0].proprio,
                frame: w[0].obj_pose,
            });
        }
    }
    Ok(out)
}

/// Re-expresses a sequence in the frame of its first object pose.
pub fn zero_out(s: &Sequence) -> ZeroedSequence {
    let inv = s.frame.inverse();
    ZeroedSequence {
        keypoints_seq: s.keypoints.iter().map(|k| k.transformed(&inv)).collect(),
        actions_seq: s.actions.iter().map(|a| Action::new(inv.apply(a.target))).collect(),
        proprio0: inv.apply(s.proprio0),
        source_frame: s.frame,
    }
}
