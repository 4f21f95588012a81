//! Planar rigid transforms and keypoint sets.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// A point (or free vector) in the workspace plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    /// Unit vector, or zero when the norm vanishes.
    pub fn normalized(self) -> Point2 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            Point2::ZERO
        }
    }

    /// Counter-clockwise quarter turn.
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    pub fn rotated(self, theta: f64) -> Point2 {
        let (s, c) = theta.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// An SE(2) rigid transform: rotate by `theta`, then translate by `(x, y)`.
///
/// `theta` is kept in `(-π, π]`. As a pose it places a body frame in the
/// world: `apply` maps body coordinates to world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for Pose2 {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn from_translation(t: Point2) -> Self {
        Self::new(t.x, t.y, 0.0)
    }

    pub fn translation(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let t = self.apply(other.translation());
        Pose2::new(t.x, t.y, self.theta + other.theta)
    }

    pub fn inverse(&self) -> Pose2 {
        let t = (-self.translation()).rotated(-self.theta);
        Pose2::new(t.x, t.y, -self.theta)
    }

    /// Maps a point through the transform (`h⁻¹(T·h(p))` in homogeneous form).
    pub fn apply(&self, p: Point2) -> Point2 {
        p.rotated(self.theta) + self.translation()
    }

    /// Rotates a free vector; translation does not act on directions.
    pub fn apply_vector(&self, v: Point2) -> Point2 {
        v.rotated(self.theta)
    }

    /// The homogeneous 3×3 matrix, row-major.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let (s, c) = self.theta.sin_cos();
        [[c, -s, self.x], [s, c, self.y], [0.0, 0.0, 1.0]]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// An ordered set of keypoints. Order identifies keypoints across frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeypointSet {
    pub points: Vec<Point2>,
}

impl KeypointSet {
    pub fn new(points: Vec<Point2>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Point2> {
        self.points.iter()
    }

    /// Every keypoint shifted by the same offset.
    pub fn translated(&self, offset: Point2) -> KeypointSet {
        KeypointSet::new(self.points.iter().map(|&p| p + offset).collect())
    }

    /// Every keypoint mapped through `pose`.
    pub fn transformed(&self, pose: &Pose2) -> KeypointSet {
        KeypointSet::new(self.points.iter().map(|&p| pose.apply(p)).collect())
    }

    /// Largest per-coordinate difference to `other`; infinite on length mismatch.
    pub fn max_abs_diff(&self, other: &KeypointSet) -> f64 {
        if self.len() != other.len() {
            return f64::INFINITY;
        }
        self.points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| (a.x - b.x).abs().max((a.y - b.y).abs()))
            .fold(0.0, f64::max)
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for p in &self.points {
            out.push(p.x);
            out.push(p.y);
        }
    }
}

/// Places a keypoint template at `pose`.
pub fn transform_keypoints(pose: &Pose2, template: &KeypointSet) -> KeypointSet {
    template.transformed(pose)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    // Independent matrix oracle.
    fn mat_mul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        out
    }

    fn pose_close(a: &Pose2, b: &Pose2, tol: f64) -> bool {
        (a.x - b.x).abs() <= tol && (a.y - b.y).abs() <= tol && wrap_angle(a.theta - b.theta).abs() <= tol
    }

    fn arb_pose() -> impl Strategy<Value = Pose2> {
        (-500.0..500.0f64, -500.0..500.0f64, -10.0..10.0f64).prop_map(|(x, y, t)| Pose2::new(x, y, t))
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn compose_identity_and_translation() {
        let p = Pose2::new(3.0, -2.0, 1.1);
        assert_eq!(Pose2::IDENTITY.compose(&p), p);
        let c = Pose2::new(1.0, 0.0, 0.0).compose(&Pose2::new(2.0, 0.0, 0.0));
        assert_eq!(c, Pose2::new(3.0, 0.0, 0.0));
    }

    #[test]
    fn compose_quarter_turn_matches_matrix() {
        let a = Pose2::new(0.0, 0.0, FRAC_PI_2);
        let b = Pose2::new(1.0, 0.0, 0.0);
        let m = mat_mul(a.to_matrix(), b.to_matrix());
        let c = a.compose(&b);
        assert!((c.x - m[0][2]).abs() < 1e-12 && (c.y - m[1][2]).abs() < 1e-12);
        assert!(pose_close(&c, &Pose2::new(0.0, 1.0, FRAC_PI_2), 1e-12));
    }

    #[test]
    fn inverse_examples() {
        assert!(pose_close(&Pose2::IDENTITY.inverse(), &Pose2::IDENTITY, 0.0));
        assert!(pose_close(
            &Pose2::new(3.0, 0.0, 0.0).inverse(),
            &Pose2::new(-3.0, 0.0, 0.0),
            0.0
        ));
    }

    #[test]
    fn transform_keypoints_examples() {
        let tmpl = KeypointSet::new(vec![Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)]);
        assert_eq!(transform_keypoints(&Pose2::IDENTITY, &tmpl), tmpl);
        let one = KeypointSet::new(vec![Point2::new(1.0, 0.0)]);
        let t = transform_keypoints(&Pose2::new(2.0, 3.0, 0.0), &one);
        assert_eq!(t.points[0], Point2::new(3.0, 3.0));
        let r = transform_keypoints(&Pose2::new(0.0, 0.0, FRAC_PI_2), &one);
        assert!(r.points[0].distance(Point2::new(0.0, 1.0)) < 1e-15);
    }

    proptest! {
        #[test]
        fn inverse_round_trip_matches_matrix_inverse(p in arb_pose()) {
            let id = p.compose(&p.inverse());
            prop_assert!(pose_close(&id, &Pose2::IDENTITY, 1e-12));
            let id2 = p.inverse().compose(&p);
            prop_assert!(pose_close(&id2, &Pose2::IDENTITY, 1e-12));
            // the homogeneous product is the identity matrix
            let m = mat_mul(p.to_matrix(), p.inverse().to_matrix());
            for i in 0..3 {
                for j in 0..3 {
                    let e = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((m[i][j] - e).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn compose_is_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            prop_assert!(pose_close(&l, &r, 1e-12));
            prop_assert!(l.theta > -PI && l.theta <= PI);
        }

        #[test]
        fn transform_is_rigid_and_equivariant(
            a in arb_pose(),
            b in arb_pose(),
            pts in proptest::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 1..8),
        ) {
            let tmpl = KeypointSet::new(pts.iter().map(|&(x, y)| Point2::new(x, y)).collect());
            let moved = transform_keypoints(&a, &tmpl);
            for i in 0..tmpl.len() {
                for j in 0..tmpl.len() {
                    let d0 = tmpl.points[i].distance(tmpl.points[j]);
                    let d1 = moved.points[i].distance(moved.points[j]);
                    prop_assert!((d0 - d1).abs() < 1e-9);
                }
            }
            let lhs = transform_keypoints(&a.compose(&b), &tmpl);
            let rhs = transform_keypoints(&a, &transform_keypoints(&b, &tmpl));
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-9);
        }
    }
}
