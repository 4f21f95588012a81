//! Records joint-policy recoveries from out-of-distribution resets, re-indexes
//! the base policy over demonstrations plus recoveries, and compares both
//! base policies on fresh seeds.

use ocr::config::RunConfig;
use ocr::harness::{collect_aug_demos, eval_suite, retrain_augmented};
use ocr::joint::BaseController;
use ocr::pipeline;
use ocr::sim::Region;

fn main() -> ocr::Result<()> {
    let cfg = RunConfig::default();
    let a = pipeline::build(&cfg, 1)?;
    let env = pipeline::env(&cfg)?;
    let tpl = cfg.template();

    let aug = collect_aug_demos(&a.joint(&cfg)?, &env, &tpl, &cfg.seeds.augment.0, 1)?;
    println!(
        "kept {} recoveries, {} timed out",
        aug.episodes.len(),
        aug.timed_out.len()
    );
    let augmented = retrain_augmented(&a.demos, &aug, &cfg.base)?;

    let original = a.base_controller(&cfg);
    let retrained = BaseController {
        base: &augmented,
        exec_per_cycle: cfg.joint.exec_per_cycle,
    };
    for (region, seeds) in [(Region::Id, &cfg.seeds.post_id), (Region::Ood, &cfg.seeds.post_ood)] {
        let before = eval_suite("base", &original, &env, &tpl, region, &seeds.0, 1)?;
        let after = eval_suite("base_aug", &retrained, &env, &tpl, region, &seeds.0, 1)?;
        println!("{region}: {:.3} -> {:.3}", before.success_rate, after.success_rate);
    }
    Ok(())
}
