//! Recovery keypoint trajectories: hold still for a distance-dependent
//! delay, then translate every keypoint along the recovery vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{KeypointSet, Point2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    /// Step scale applied to the recovery vector.
    pub alpha: f64,
    /// Plan length in frames.
    pub horizon: usize,
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            alpha: 4.0,
            horizon: 16,
            d_min: 20.0,
            d_max: 160.0,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("plan.alpha must be > 0"));
        }
        if self.horizon == 0 {
            return Err(Error::config("plan.horizon must be >= 1"));
        }
        if !(0.0 <= self.d_min && self.d_min < self.d_max) {
            return Err(Error::config("plan needs 0 <= d_min < d_max"));
        }
        Ok(())
    }
}

/// Frames of delay before the plan starts moving: the line through
/// `(d_min, L)` and `(d_max, 0)`, rounded half to even and clamped to `[0, L]`.
pub fn delay(d_pos: f64, cfg: &PlanConfig) -> usize {
    let l = cfg.horizon as f64;
    let v = -l / (cfg.d_max - cfg.d_min) * (d_pos - cfg.d_min) + l;
    v.round_ties_even().clamp(0.0, l) as usize
}

/// `L` keypoint frames in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTrajectory {
    pub frames: Vec<KeypointSet>,
}

impl RecoveryTrajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Frame `t` (1-based) shifts every keypoint by `max(0, t − df)·α·δ`.
pub fn plan_recovery(kps: &KeypointSet, delta_rec: Point2, d_pos: f64, cfg: &PlanConfig) -> RecoveryTrajectory {
    let df = delay(d_pos, cfg);
    let frames = (1..=cfg.horizon)
        .map(|t| {
            let steps = t.saturating_sub(df) as f64;
            kps.translated(delta_rec * (steps * cfg.alpha))
        })
        .collect();
    RecoveryTrajectory { frames }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kps() -> KeypointSet {
        KeypointSet::new(vec![Point2::new(1.0, 2.0), Point2::new(-3.0, 0.5)])
    }

    #[test]
    fn delay_endpoints() {
        let c = PlanConfig::default();
        assert_eq!(delay(c.d_min, &c), 16);
        assert_eq!(delay(c.d_max, &c), 0);
        assert_eq!(delay(0.5 * (c.d_min + c.d_max), &c), 8);
        assert_eq!(delay(0.0, &c), 16);
        assert_eq!(delay(1e6, &c), 0);
    }

    #[test]
    fn delay_rounds_half_to_even() {
        // L = 5 over [0, 10]: d = 5 gives 2.5, d = 3 gives 3.5
        let c = PlanConfig {
            horizon: 5,
            d_min: 0.0,
            d_max: 10.0,
            ..PlanConfig::default()
        };
        assert_eq!(delay(5.0, &c), 2);
        assert_eq!(delay(3.0, &c), 4);
    }

    #[test]
    fn full_delay_is_stationary() {
        let c = PlanConfig::default();
        let p = plan_recovery(&kps(), Point2::new(1.0, 1.0), 0.0, &c);
        assert_eq!(p.len(), 16);
        assert!(p.frames.iter().all(|f| *f == kps()));
    }

    #[test]
    fn no_delay_is_the_naive_plan() {
        let c = PlanConfig::default();
        let d = Point2::new(0.25, -0.5);
        let p = plan_recovery(&kps(), d, c.d_max, &c);
        for (i, f) in p.frames.iter().enumerate() {
            let t = (i + 1) as f64;
            for (a, b) in f.iter().zip(kps().iter()) {
                assert_eq!(*a, *b + d * (t * c.alpha));
            }
        }
    }

    #[test]
    fn delayed_plan_by_hand() {
        let c = PlanConfig::default();
        // df = 5 at d = d_min + 11/16 · (d_max − d_min)
        let d_pos = c.d_min + 11.0 / 16.0 * (c.d_max - c.d_min);
        assert_eq!(delay(d_pos, &c), 5);
        let p = plan_recovery(&kps(), Point2::new(1.0, 0.0), d_pos, &c);
        for f in &p.frames[..5] {
            assert_eq!(*f, kps());
        }
        assert_eq!(p.frames[5].points[0], Point2::new(5.0, 2.0));
        assert_eq!(p.frames[15].points[0], Point2::new(45.0, 2.0));
    }

    proptest! {
        #[test]
        fn delay_is_monotone(a in 0.0..400.0f64, b in 0.0..400.0f64) {
            let c = PlanConfig::default();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(delay(hi, &c) <= delay(lo, &c));
            prop_assert!(delay(a, &c) <= c.horizon);
        }

        #[test]
        fn displacement_is_rigid_and_monotone(dx in -3.0..3.0f64, dy in -3.0..3.0f64, d_pos in 0.0..300.0f64) {
            let c = PlanConfig::default();
            let p = plan_recovery(&kps(), Point2::new(dx, dy), d_pos, &c);
            let mut last = 0.0;
            for f in &p.frames {
                let shifts: Vec<Point2> = f.iter().zip(kps().iter()).map(|(a, b)| *a - *b).collect();
                prop_assert!((shifts[0] - shifts[1]).norm() < 1e-12);
                let s = shifts[0].norm();
                prop_assert!(s + 1e-12 >= last);
                last = s;
            }
        }
    }
}
