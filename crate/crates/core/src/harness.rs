//! Seeded batch evaluation, expert demonstration collection, and the
//! recovery-data augmentation loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Episode, Step};
use crate::error::{Error, Result};
use crate::geom::KeypointSet;
use crate::joint::{observe, rollout, Branch, Controller, JointPolicy, Status};
use crate::manifold::ManifoldModel;
use crate::planner::{plan_recovery, PlanConfig};
use crate::policy::{train_base, BaseConfig, KnnBasePolicy};
use crate::sim::{scripted_expert, Action, ExpertConfig, PushT, Region};

/// Runs the scripted expert from one reset per seed and records every tick
/// up to success. Seeds whose episode times out are skipped and returned
/// separately.
pub fn collect_demos(
    env: &PushT,
    expert: &ExpertConfig,
    template: &KeypointSet,
    region: Region,
    seeds: &[u64],
    jobs: usize,
) -> Result<(Vec<Episode>, Vec<u64>)> {
    let results = crate::par::map(jobs, seeds, |&seed| -> Result<Option<Episode>> {
        let mut s = env.reset(seed, region)?;
        let mut rng = ChaCha8Rng::seed_from_u64(s.rng_state);
        let mut steps = Vec::new();
        while !env.is_success(&s) && s.step_count < env.cfg.max_steps {
            let action = scripted_expert(env, &s, expert, &mut rng);
            steps.push(Step {
                obs: observe(&s, template),
                action,
                proprio: s.ee_pos,
            });
            s = env.step(&s, &action);
        }
        Ok(env.is_success(&s).then_some(Episode { steps }))
    })?;
    let mut demos = Vec::new();
    let mut failed = Vec::new();
    for (r, &seed) in results.into_iter().zip(seeds) {
        match r? {
            Some(ep) => demos.push(ep),
            None => failed.push(seed),
        }
    }
    Ok((demos, failed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub success: bool,
    pub ticks: usize,
    pub final_coverage: f64,
    pub recover_decisions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub region: Region,
    pub n_seeds: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean ticks over successful seeds.
    pub mean_steps_to_success: Option<f64>,
    pub outcomes: Vec<SeedOutcome>,
    /// Hash of the environment config, the controller, and the seed list.
    pub fingerprint: String,
}

/// One rollout per seed, aggregated in seed order.
pub fn eval_suite<C: Controller + ?Sized>(
    policy_id: &str,
    controller: &C,
    env: &PushT,
    template: &KeypointSet,
    region: Region,
    seeds: &[u64],
    jobs: usize,
) -> Result<EvalReport> {
    if seeds.is_empty() {
        return Err(Error::invalid("evaluation needs at least one seed"));
    }
    let traces = crate::par::map(jobs, seeds, |&seed| {
        rollout(env, controller, template, seed, region, env.cfg.max_steps)
    })?;
    let mut outcomes = Vec::with_capacity(seeds.len());
    for t in traces {
        let t = t?;
        outcomes.push(SeedOutcome {
            seed: t.seed,
            success: t.status == Status::Success,
            ticks: t.ticks,
            final_coverage: t.final_coverage,
            recover_decisions: t.recover_decisions(),
        });
    }
    let successes = outcomes.iter().filter(|o| o.success).count();
    let mean_steps_to_success = (successes > 0).then(|| {
        outcomes
            .iter()
            .filter(|o| o.success)
            .map(|o| o.ticks as f64)
            .sum::<f64>()
            / successes as f64
    });
    let fingerprint = crate::io::digest(&[
        &policy_id,
        &region,
        &seeds,
        &env.cfg,
        template,
        &controller.fingerprint(),
    ]);
    Ok(EvalReport {
        policy: policy_id.to_string(),
        region,
        n_seeds: seeds.len(),
        successes,
        success_rate: successes as f64 / seeds.len() as f64,
        mean_steps_to_success,
        outcomes,
        fingerprint,
    })
}

/// Recovery rollouts recorded as demonstrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedDataset {
    pub episodes: Vec<Episode>,
    /// Seeds whose episode was kept, in order.
    pub seeds: Vec<u64>,
    /// Seeds that hit the step limit before reaching the threshold.
    pub timed_out: Vec<u64>,
    pub stop_criterion: String,
}

/// From an out-of-distribution reset per seed, runs the joint policy and
/// records `(observation, action, proprioception)` until the mean keypoint
/// density reaches the switching threshold. The last recorded step is the
/// first in-distribution frame, paired with a hold action.
pub fn collect_aug_demos(
    jp: &JointPolicy<'_>,
    env: &PushT,
    template: &KeypointSet,
    seeds: &[u64],
    jobs: usize,
) -> Result<AugmentedDataset> {
    let eps = jp.manifold.eps_rec;
    let results = crate::par::map(jobs, seeds, |&seed| -> Result<Option<Episode>> {
        let mut s = env.reset(seed, Region::Ood)?;
        let mut steps = Vec::new();
        let mut prev: Option<Branch> = None;
        loop {
            let obs = observe(&s, template);
            if jp.manifold.recovery_tuple(&obs.keypoints).eta_rec >= eps {
                steps.push(Step {
                    obs,
                    action: Action::new(s.ee_pos),
                    proprio: s.ee_pos,
                });
                return Ok(Some(Episode { steps }));
            }
            if s.step_count >= env.cfg.max_steps {
                return Ok(None);
            }
            let d = jp.joint_step(&obs, s.ee_pos, prev);
            prev = Some(d.branch);
            for a in d.actions.iter().take(jp.cfg.exec_per_cycle) {
                let o = observe(&s, template);
                if jp.manifold.recovery_tuple(&o.keypoints).eta_rec >= eps || s.step_count >= env.cfg.max_steps {
                    break;
                }
                steps.push(Step {
                    obs: o,
                    action: *a,
                    proprio: s.ee_pos,
                });
                s = env.step(&s, a);
            }
        }
    })?;
    let mut out = AugmentedDataset {
        episodes: Vec::new(),
        seeds: Vec::new(),
        timed_out: Vec::new(),
        stop_criterion: format!("mean keypoint density >= {eps:e}"),
    };
    for (r, &seed) in results.into_iter().zip(seeds) {
        match r? {
            Some(ep) => {
                out.episodes.push(ep);
                out.seeds.push(seed);
            }
            None => out.timed_out.push(seed),
        }
    }
    Ok(out)
}

/// Re-indexes the base policy over the original demonstrations plus the
/// recorded recoveries.
pub fn retrain_augmented(base_demos: &[Episode], aug: &AugmentedDataset, cfg: &BaseConfig) -> Result<KnnBasePolicy> {
    let n = base_demos
        .iter()
        .flat_map(|e| e.steps.first())
        .map(|s| s.obs.keypoints.len())
        .next();
    let m = aug
        .episodes
        .iter()
        .flat_map(|e| e.steps.first())
        .map(|s| s.obs.keypoints.len())
        .next();
    if let (Some(n), Some(m)) = (n, m) {
        if n != m {
            return Err(Error::invalid(format!(
                "augmented episodes carry {m} keypoints, demonstrations carry {n}"
            )));
        }
    }
    let union: Vec<Episode> = base_demos.iter().chain(&aug.episodes).cloned().collect();
    train_base(&union, cfg)
}

/// Densities seen while teleporting the keypoints to the first frame of a
/// fresh naive plan each cycle, with no physics in the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentTrace {
    /// `eta_rec` before each cycle, ending with the first value at or above
    /// the threshold if it was reached.
    pub etas: Vec<f64>,
    pub reached: bool,
}

impl AscentTrace {
    /// Whether the density never dropped by more than `tol` between cycles.
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.etas.windows(2).all(|w| w[1] >= w[0] - tol)
    }
}

pub fn kinematic_ascent(
    manifold: &ManifoldModel,
    start: &KeypointSet,
    plan_cfg: &PlanConfig,
    max_cycles: usize,
) -> AscentTrace {
    let mut kps = start.clone();
    let mut etas = Vec::new();
    for _ in 0..=max_cycles {
        let t = manifold.recovery_tuple(&kps);
        etas.push(t.eta_rec);
        if t.eta_rec >= manifold.eps_rec {
            return AscentTrace { etas, reached: true };
        }
        let plan = plan_recovery(&kps, t.delta_rec, f64::INFINITY, plan_cfg);
        kps = plan.frames[0].clone();
    }
    AscentTrace { etas, reached: false }
}
