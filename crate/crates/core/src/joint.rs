//! Density-activated switching between the task policy and object recovery,
//! and the closed-loop rollout that drives either controller.

use serde::{Deserialize, Serialize};

use crate::dataset::Observation;
use crate::error::{Error, Result};
use crate::geom::{transform_keypoints, KeypointSet, Point2};
use crate::manifold::{ManifoldModel, RecoveryTuple};
use crate::planner::{plan_recovery, PlanConfig, RecoveryTrajectory};
use crate::policy::{inverse_act, BasePolicy, InversePolicy};
use crate::sim::{Action, PushT, Region, SimState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Branch {
    Base,
    Recover,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointConfig {
    /// Actions executed from each returned window before re-planning.
    pub exec_per_cycle: usize,
    /// While recovering, stay in recovery until the density exceeds
    /// `eps_rec · (1 + h)`. `None` switches on the bare threshold.
    pub hysteresis: Option<f64>,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            exec_per_cycle: 8,
            hysteresis: None,
        }
    }
}

impl JointConfig {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.exec_per_cycle == 0 || self.exec_per_cycle > horizon {
            return Err(Error::config(format!("joint.exec_per_cycle must be in 1..={horizon}")));
        }
        if self.hysteresis.is_some_and(|h| !(h >= 0.0)) {
            return Err(Error::config("joint.hysteresis must be >= 0"));
        }
        Ok(())
    }
}

/// What a controller chose at one decision point.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub actions: Vec<Action>,
    pub branch: Branch,
    /// Present when the controller consulted the density model.
    pub tuple: Option<RecoveryTuple>,
    /// The object plan handed to the inverse policy, if any.
    pub plan: Option<RecoveryTrajectory>,
}

/// Anything that maps observations to action windows inside [`rollout`].
pub trait Controller: Sync {
    fn decide(&self, obs: &Observation, proprio: Point2, prev: Option<Branch>) -> Decision;
    fn exec_per_cycle(&self) -> usize;
    /// Content hash of every model and setting that affects decisions.
    fn fingerprint(&self) -> String;
}

/// The task policy alone.
pub struct BaseController<'a> {
    pub base: &'a dyn BasePolicy,
    pub exec_per_cycle: usize,
}

impl Controller for BaseController<'_> {
    fn decide(&self, obs: &Observation, proprio: Point2, _prev: Option<Branch>) -> Decision {
        Decision {
            actions: self.base.act(obs, proprio),
            branch: Branch::Base,
            tuple: None,
            plan: None,
        }
    }

    fn exec_per_cycle(&self) -> usize {
        self.exec_per_cycle
    }

    fn fingerprint(&self) -> String {
        crate::io::digest(&[&"base", &self.base.fingerprint(), &self.exec_per_cycle])
    }
}

/// Runs the task policy while the object looks in-distribution and plans a
/// recovery otherwise.
pub struct JointPolicy<'a> {
    pub base: &'a dyn BasePolicy,
    pub inv: &'a dyn InversePolicy,
    pub manifold: &'a ManifoldModel,
    pub plan_cfg: PlanConfig,
    pub cfg: JointConfig,
}

impl<'a> JointPolicy<'a> {
    pub fn new(
        base: &'a dyn BasePolicy,
        inv: &'a dyn InversePolicy,
        manifold: &'a ManifoldModel,
        plan_cfg: PlanConfig,
        cfg: JointConfig,
    ) -> Result<Self> {
        plan_cfg.validate()?;
        cfg.validate(base.horizon().min(inv.horizon()))?;
        if inv.horizon() != plan_cfg.horizon {
            return Err(Error::config(format!(
                "inverse policy horizon {} differs from plan horizon {}",
                inv.horizon(),
                plan_cfg.horizon
            )));
        }
        if inv.n_keypoints() != manifold.n_keypoints() {
            return Err(Error::config(
                "inverse policy and manifold disagree on the keypoint count",
            ));
        }
        Ok(Self {
            base,
            inv,
            manifold,
            plan_cfg,
            cfg,
        })
    }

    /// Threshold in force given the previous branch.
    pub fn threshold(&self, prev: Option<Branch>) -> f64 {
        match (prev, self.cfg.hysteresis) {
            (Some(Branch::Recover), Some(h)) => self.manifold.eps_rec * (1.0 + h),
            _ => self.manifold.eps_rec,
        }
    }

    pub fn joint_step(&self, obs: &Observation, proprio: Point2, prev: Option<Branch>) -> Decision {
        let tuple = self.manifold.recovery_tuple(&obs.keypoints);
        if tuple.eta_rec >= self.threshold(prev) {
            return Decision {
                actions: self.base.act(obs, proprio),
                branch: Branch::Base,
                tuple: Some(tuple),
                plan: None,
            };
        }
        let d_pos = proprio.distance(obs.obj_pose.translation());
        let plan = plan_recovery(&obs.keypoints, tuple.delta_rec, d_pos, &self.plan_cfg);
        Decision {
            actions: inverse_act(self.inv, &plan, &obs.obj_pose, proprio),
            branch: Branch::Recover,
            tuple: Some(tuple),
            plan: Some(plan),
        }
    }
}

impl Controller for JointPolicy<'_> {
    fn decide(&self, obs: &Observation, proprio: Point2, prev: Option<Branch>) -> Decision {
        self.joint_step(obs, proprio, prev)
    }

    fn exec_per_cycle(&self) -> usize {
        self.cfg.exec_per_cycle
    }

    fn fingerprint(&self) -> String {
        crate::io::digest(&[
            &"joint",
            &self.base.fingerprint(),
            &self.inv.fingerprint(),
            self.manifold,
            &self.plan_cfg,
            &self.cfg,
        ])
    }
}

pub fn observe(s: &SimState, template: &KeypointSet) -> Observation {
    Observation {
        keypoints: transform_keypoints(&s.block_pose, template),
        obj_pose: s.block_pose,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Success,
    Timeout,
}

/// One decision point of a rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub tick: usize,
    pub state: SimState,
    pub eta_rec: Option<f64>,
    pub delta_rec: Option<Point2>,
    pub branch: Branch,
    /// The full window returned by the controller.
    pub actions: Vec<Action>,
    /// How many of `actions` were executed.
    pub executed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutTrace {
    pub seed: u64,
    pub region: Region,
    pub steps: Vec<TraceStep>,
    pub status: Status,
    pub ticks: usize,
    pub final_state: SimState,
    pub final_coverage: f64,
}

impl RolloutTrace {
    pub fn recover_decisions(&self) -> usize {
        self.steps.iter().filter(|s| s.branch == Branch::Recover).count()
    }
}

/// Resets in `region`, then alternates decide / execute-first-`E` until
/// success or `max_steps` ticks.
pub fn rollout<C: Controller + ?Sized>(
    env: &PushT,
    controller: &C,
    template: &KeypointSet,
    seed: u64,
    region: Region,
    max_steps: usize,
) -> Result<RolloutTrace> {
    let mut s = env.reset(seed, region)?;
    let mut steps = Vec::new();
    let mut prev = None;
    while !env.is_success(&s) && s.step_count < max_steps {
        let obs = observe(&s, template);
        let d = controller.decide(&obs, s.ee_pos, prev);
        let mut record = TraceStep {
            tick: s.step_count,
            state: s.clone(),
            eta_rec: d.tuple.map(|t| t.eta_rec),
            delta_rec: d.tuple.map(|t| t.delta_rec),
            branch: d.branch,
            actions: d.actions,
            executed: 0,
        };
        for a in record.actions.iter().take(controller.exec_per_cycle()) {
            s = env.step(&s, a);
            record.executed += 1;
            if env.is_success(&s) || s.step_count >= max_steps {
                break;
            }
        }
        prev = Some(d.branch);
        steps.push(record);
    }
    let status = if env.is_success(&s) {
        Status::Success
    } else {
        Status::Timeout
    };
    Ok(RolloutTrace {
        seed,
        region,
        steps,
        status,
        ticks: s.step_count,
        final_coverage: env.coverage(&s),
        final_state: s,
    })
}

/// Line records of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceRecord {
    Decision(TraceStep),
    End {
        seed: u64,
        region: Region,
        status: Status,
        ticks: usize,
        final_state: SimState,
        final_coverage: f64,
    },
}

pub const TRACE_KIND: &str = "trace";

pub fn save_trace(path: &std::path::Path, trace: &RolloutTrace, config: &serde_json::Value) -> Result<()> {
    let end = TraceRecord::End {
        seed: trace.seed,
        region: trace.region,
        status: trace.status,
        ticks: trace.ticks,
        final_state: trace.final_state.clone(),
        final_coverage: trace.final_coverage,
    };
    let records = trace
        .steps
        .iter()
        .cloned()
        .map(TraceRecord::Decision)
        .chain(std::iter::once(end));
    crate::io::write_records(path, TRACE_KIND, config, records)
}

pub fn load_trace(path: &std::path::Path) -> Result<RolloutTrace> {
    let (_, records) = crate::io::read_records::<TraceRecord>(path, TRACE_KIND)?;
    let mut steps = Vec::new();
    for r in records {
        match r {
            TraceRecord::Decision(s) => steps.push(s),
            TraceRecord::End {
                seed,
                region,
                status,
                ticks,
                final_state,
                final_coverage,
            } => {
                return Ok(RolloutTrace {
                    seed,
                    region,
                    steps,
                    status,
                    ticks,
                    final_state,
                    final_coverage,
                })
            }
        }
    }
    Err(Error::Schema {
        path: path.into(),
        msg: "trace has no end record".into(),
    })
}
