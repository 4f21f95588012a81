//! Task and recovery policies.
//!
//! Both are nearest-neighbor regressors over demonstration windows. The base
//! policy maps the current observation to the next `L` actions; the inverse
//! policy maps a desired keypoint trajectory, expressed in the object's
//! current frame, to the actions that produced similar trajectories in the
//! demonstrations.

mod base;
mod inverse;
pub mod knn;

pub use base::{train_base, BaseConfig, KnnBasePolicy};
pub use inverse::{inverse_act, inverse_training_set, train_inverse, InverseConfig, KnnInversePolicy};

use crate::dataset::Observation;
use crate::geom::{KeypointSet, Point2};
use crate::sim::Action;

pub trait BasePolicy: Send + Sync {
    /// Length of the returned action window.
    fn horizon(&self) -> usize;
    fn act(&self, obs: &Observation, proprio: Point2) -> Vec<Action>;
    /// Content hash of the model.
    fn fingerprint(&self) -> String;
}

pub trait InversePolicy: Send + Sync {
    fn horizon(&self) -> usize;
    fn n_keypoints(&self) -> usize;
    /// Whether queries are expressed in the object frame (`true`) or left in
    /// world coordinates.
    fn zero_out(&self) -> bool;
    /// Actions for a keypoint trajectory and starting proprioception, both
    /// already in the policy's working frame.
    fn act_frame(&self, keypoints: &[KeypointSet], proprio0: Point2) -> Vec<Action>;
    fn fingerprint(&self) -> String;
}

pub(crate) fn points_to_actions(v: &[f64]) -> Vec<Action> {
    v.chunks_exact(2)
        .map(|c| Action::new(Point2::new(c[0], c[1])))
        .collect()
}
