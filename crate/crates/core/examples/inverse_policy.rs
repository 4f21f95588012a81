//! Trains the keypoint inverse policy on expert demonstrations and shows that
//! zero-out makes its answer follow the object: the same plan, rigidly moved
//! with the object, yields rigidly moved actions.

use ocr::config::RunConfig;
use ocr::dataset::build_recovery_dataset;
use ocr::geom::Pose2;
use ocr::pipeline;
use ocr::planner::plan_recovery;
use ocr::policy::inverse_act;

fn main() -> ocr::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.seeds.demos = ocr::config::SeedList::range(0, 20);
    let demos = pipeline::demos(&cfg, 1)?;
    let rec = build_recovery_dataset(&demos, &cfg.template())?;
    let inv = pipeline::inverse(&cfg, &rec)?;
    println!(
        "indexed {} windows from {} demonstrations",
        inv.index.len(),
        demos.len()
    );

    let step = &rec[0].steps[0];
    let plan = plan_recovery(&step.keypoints, ocr::geom::Point2::new(1.0, 0.5), 200.0, &cfg.plan);
    let a = inverse_act(&inv, &plan, &step.obj_pose, step.proprio);

    let g = Pose2::new(-80.0, 40.0, 0.6);
    let moved = ocr::planner::RecoveryTrajectory {
        frames: plan.frames.iter().map(|f| f.transformed(&g)).collect(),
    };
    let b = inverse_act(&inv, &moved, &g.compose(&step.obj_pose), g.apply(step.proprio));
    let gap = a
        .iter()
        .zip(&b)
        .map(|(x, y)| g.apply(x.target).distance(y.target))
        .fold(0.0, f64::max);
    println!("first action {:?}", a[0].target);
    println!("largest mismatch after moving everything by g: {gap:.2e}");
    Ok(())
}
