//! Rigid transforms on the plane and the T-block keypoint template.

use std::f64::consts::FRAC_PI_2;

use ocr::geom::{transform_keypoints, Point2, Pose2};
use ocr::sim::SimConfig;

fn main() {
    let a = Pose2::new(100.0, 50.0, FRAC_PI_2);
    let b = Pose2::new(10.0, 0.0, 0.0);
    let ab = a.compose(&b);
    println!("a∘b = ({:.3}, {:.3}, {:.3})", ab.x, ab.y, ab.theta);

    let back = ab.compose(&b.inverse());
    println!("a∘b∘b⁻¹ = ({:.3}, {:.3}, {:.3})", back.x, back.y, back.theta);

    let p = Point2::new(1.0, 0.0);
    println!("a maps {p:?} to {:?}", a.apply(p));

    let template = SimConfig::default().block().default_keypoints();
    let target = SimConfig::default().target_pose;
    for (i, k) in transform_keypoints(&target, &template).iter().enumerate() {
        println!("keypoint {i} at target: ({:.2}, {:.2})", k.x, k.y);
    }
}
