//! Builds every model from expert demonstrations, then compares the base
//! policy and the joint policy from one out-of-distribution reset.

use ocr::config::RunConfig;
use ocr::joint::{rollout, Branch};
use ocr::pipeline;
use ocr::sim::Region;

fn main() -> ocr::Result<()> {
    let cfg = RunConfig::default();
    let a = pipeline::build(&cfg, 1)?;
    let env = pipeline::env(&cfg)?;
    let seed = cfg.seeds.eval_ood.0[1];
    println!("eps_rec {:.3e}", a.manifold.eps_rec);

    let base = rollout(
        &env,
        &a.base_controller(&cfg),
        &cfg.template(),
        seed,
        Region::Ood,
        env.cfg.max_steps,
    )?;
    println!(
        "base:  {:?} after {} ticks, coverage {:.3}",
        base.status, base.ticks, base.final_coverage
    );

    let jp = a.joint(&cfg)?;
    let joint = rollout(&env, &jp, &cfg.template(), seed, Region::Ood, env.cfg.max_steps)?;
    println!(
        "joint: {:?} after {} ticks, coverage {:.3}",
        joint.status, joint.ticks, joint.final_coverage
    );
    for s in &joint.steps {
        let tag = if s.branch == Branch::Recover { "RECOVER" } else { "BASE" };
        println!(
            "  tick {:3}  {tag:7}  eta_rec {:.3e}",
            s.tick,
            s.eta_rec.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
