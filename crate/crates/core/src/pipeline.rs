//! The full training pipeline as plain functions over a [`RunConfig`].

use crate::config::RunConfig;
use crate::dataset::{build_recovery_dataset, extract_sequences, Episode, RecEpisode};
use crate::error::{Error, Result};
use crate::geom::KeypointSet;
use crate::harness::collect_demos;
use crate::joint::{BaseController, JointPolicy};
use crate::manifold::{calibrate, fit_manifold, ManifoldModel};
use crate::policy::{inverse_training_set, train_base, train_inverse, KnnBasePolicy, KnnInversePolicy};
use crate::sim::{PushT, Region};

/// Every trained artifact of one run.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub demos: Vec<Episode>,
    pub rec: Vec<RecEpisode>,
    pub manifold: ManifoldModel,
    pub base: KnnBasePolicy,
    pub inverse: KnnInversePolicy,
}

pub fn env(cfg: &RunConfig) -> Result<PushT> {
    PushT::new(cfg.sim.clone())
}

/// Expert demonstrations from in-distribution resets.
pub fn demos(cfg: &RunConfig, jobs: usize) -> Result<Vec<Episode>> {
    let (demos, failed) = collect_demos(
        &env(cfg)?,
        &cfg.expert,
        &cfg.template(),
        Region::Id,
        &cfg.seeds.demos.0,
        jobs,
    )?;
    if demos.is_empty() {
        return Err(Error::invalid(format!(
            "the expert failed on all {} demo seeds",
            failed.len()
        )));
    }
    Ok(demos)
}

pub fn frames(rec: &[RecEpisode]) -> Vec<KeypointSet> {
    rec.iter()
        .flat_map(|e| e.steps.iter().map(|s| s.keypoints.clone()))
        .collect()
}

pub fn manifold(cfg: &RunConfig, rec: &[RecEpisode], jobs: usize) -> Result<ManifoldModel> {
    let frames = frames(rec);
    let fitted = fit_manifold(&frames, &cfg.manifold, jobs)?;
    calibrate(&fitted, &frames, &cfg.manifold)
}

pub fn inverse(cfg: &RunConfig, rec: &[RecEpisode]) -> Result<KnnInversePolicy> {
    let windows = extract_sequences(rec, cfg.plan.horizon)?;
    train_inverse(
        &inverse_training_set(&windows.sequences, cfg.inverse.zero_out),
        &cfg.inverse,
    )
}

/// Collects demonstrations and trains everything from them.
pub fn build(cfg: &RunConfig, jobs: usize) -> Result<Artifacts> {
    cfg.validate()?;
    let demos = demos(cfg, jobs)?;
    let rec = build_recovery_dataset(&demos, &cfg.template())?;
    let manifold = manifold(cfg, &rec, jobs)?;
    let base = train_base(&demos, &cfg.base)?;
    let inverse = inverse(cfg, &rec)?;
    Ok(Artifacts {
        demos,
        rec,
        manifold,
        base,
        inverse,
    })
}

impl Artifacts {
    pub fn base_controller(&self, cfg: &RunConfig) -> BaseController<'_> {
        BaseController {
            base: &self.base,
            exec_per_cycle: cfg.joint.exec_per_cycle,
        }
    }

    pub fn joint(&self, cfg: &RunConfig) -> Result<JointPolicy<'_>> {
        JointPolicy::new(
            &self.base,
            &self.inverse,
            &self.manifold,
            cfg.plan.clone(),
            cfg.joint.clone(),
        )
    }
}
