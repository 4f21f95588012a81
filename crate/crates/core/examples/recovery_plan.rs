//! The delay function and a recovery keypoint plan at a few end-effector
//! distances.

use ocr::geom::{KeypointSet, Point2};
use ocr::planner::{delay, plan_recovery, PlanConfig};

fn main() {
    let cfg = PlanConfig::default();
    for d in [0.0, cfg.d_min, 60.0, 90.0, 120.0, cfg.d_max, 400.0] {
        println!("d_pos {d:6.1} -> delay {:2} frames", delay(d, &cfg));
    }

    let kps = KeypointSet::new(vec![Point2::new(400.0, 300.0), Point2::new(420.0, 310.0)]);
    let delta = Point2::new(-1.5, -0.5);
    let plan = plan_recovery(&kps, delta, 90.0, &cfg);
    for (t, f) in plan.frames.iter().enumerate() {
        println!(
            "frame {:2}: first keypoint ({:.1}, {:.1})",
            t + 1,
            f.points[0].x,
            f.points[0].y
        );
    }
}
