//! Keypoint density model: one Gaussian mixture per keypoint, the shaped
//! recovery gradient, and the mean recovery tuple used for switching and
//! planning.

mod gmm;

pub use gmm::{bic, fit_em, reg_floor, select_by_bic, Component, Cov2, EmConfig, GmmFit, GmmParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{KeypointSet, Point2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifoldConfig {
    /// Mixture components per keypoint.
    pub components: usize,
    pub em: EmConfig,
    /// Pick the component count per keypoint by BIC over `bic_range`.
    pub select_bic: bool,
    pub bic_range: (usize, usize),
    /// Fixed `φ`; otherwise the median training gradient norm.
    pub phi: Option<f64>,
    /// Fixed `η`; otherwise `eta_scale · φ`.
    pub eta: Option<f64>,
    pub eta_scale: f64,
    /// Fixed switching threshold; otherwise a low percentile of training
    /// frame densities.
    pub eps_rec: Option<f64>,
    pub eps_percentile: f64,
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        Self {
            components: 5,
            em: EmConfig::default(),
            select_bic: false,
            bic_range: (2, 10),
            phi: None,
            eta: None,
            eta_scale: 0.5,
            eps_rec: None,
            eps_percentile: 5.0,
        }
    }
}

impl ManifoldConfig {
    pub fn validate(&self) -> Result<()> {
        self.em.validate()?;
        if self.components == 0 {
            return Err(Error::config("manifold.components must be >= 1"));
        }
        if self.bic_range.0 == 0 || self.bic_range.0 > self.bic_range.1 {
            return Err(Error::config(
                "manifold.bic_range must be a non-empty range of positive counts",
            ));
        }
        if self.phi.is_some_and(|v| !v.is_finite()) {
            return Err(Error::config("manifold.phi must be finite"));
        }
        if self.eta.is_some_and(|v| !(v > 0.0 && v.is_finite())) || !(self.eta_scale > 0.0) {
            return Err(Error::config("manifold.eta and eta_scale must be > 0"));
        }
        if self.eps_rec.is_some_and(|v| !(v > 0.0)) {
            return Err(Error::config("manifold.eps_rec must be > 0"));
        }
        if !(0.0..=100.0).contains(&self.eps_percentile) {
            return Err(Error::config("manifold.eps_percentile must be in [0, 100]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub seed: u64,
    pub components: usize,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub n_points: usize,
}

/// Per-keypoint mixtures plus the gradient shaping and switching constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldModel {
    pub per_keypoint: Vec<GmmParams>,
    pub q_phi: f64,
    pub q_eta: f64,
    pub eps_rec: f64,
    pub fit: Vec<FitInfo>,
}

/// Mean shaped gradient and mean density over the keypoints of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTuple {
    pub delta_rec: Point2,
    pub eta_rec: f64,
}

/// Fits one mixture per keypoint over every training frame. Shaping
/// constants start at neutral values until [`calibrate`] runs.
pub fn fit_manifold(frames: &[KeypointSet], cfg: &ManifoldConfig, jobs: usize) -> Result<ManifoldModel> {
    cfg.validate()?;
    let n = frames
        .first()
        .map(|f| f.len())
        .ok_or_else(|| Error::invalid("no training frames"))?;
    if n == 0 || frames.iter().any(|f| f.len() != n) {
        return Err(Error::invalid("training frames must share a non-zero keypoint count"));
    }
    let columns: Vec<Vec<Point2>> = (0..n).map(|k| frames.iter().map(|f| f.points[k]).collect()).collect();
    let fits = crate::par::map(jobs, &columns, |pts| {
        if cfg.select_bic {
            select_by_bic(pts, cfg.bic_range.0..=cfg.bic_range.1, &cfg.em)
        } else {
            fit_em(pts, cfg.components, &cfg.em)
        }
    })?;
    let mut per_keypoint = Vec::with_capacity(n);
    let mut fit = Vec::with_capacity(n);
    for f in fits {
        let f = f?;
        fit.push(FitInfo {
            seed: cfg.em.seed,
            components: f.params.len(),
            log_likelihood: f.log_likelihood,
            iterations: f.history.len(),
            n_points: frames.len(),
        });
        per_keypoint.push(f.params);
    }
    Ok(ManifoldModel {
        per_keypoint,
        q_phi: 0.0,
        q_eta: 1.0,
        eps_rec: f64::MIN_POSITIVE,
        fit,
    })
}

impl ManifoldModel {
    pub fn n_keypoints(&self) -> usize {
        self.per_keypoint.len()
    }

    /// Gradient of keypoint `k`'s density, reshaped so its length is
    /// `exp((φ − ‖∇p‖)/η)`: long far from the data, short where the density
    /// is steep. The direction comes from `∇ ln p`, which stays defined
    /// where `p` itself underflows.
    pub fn modified_grad(&self, k: usize, x: Point2) -> Point2 {
        let (p, gl) = self.per_keypoint[k].density_and_grad_log(x);
        shape_gradient(p, gl, self.q_phi, self.q_eta)
    }

    pub fn density(&self, k: usize, x: Point2) -> f64 {
        self.per_keypoint[k].density(x)
    }

    pub fn recovery_tuple(&self, kps: &KeypointSet) -> RecoveryTuple {
        let n = kps.len() as f64;
        let mut delta = Point2::ZERO;
        let mut eta = 0.0;
        for (g, &x) in self.per_keypoint.iter().zip(kps.iter()) {
            let (p, gl) = g.density_and_grad_log(x);
            delta = delta + shape_gradient(p, gl, self.q_phi, self.q_eta);
            eta += p;
        }
        RecoveryTuple {
            delta_rec: delta * (1.0 / n),
            eta_rec: eta / n,
        }
    }

    /// True when the frame's mean density reaches the switching threshold.
    pub fn is_in_distribution(&self, kps: &KeypointSet) -> bool {
        self.recovery_tuple(kps).eta_rec >= self.eps_rec
    }
}

fn shape_gradient(p: f64, grad_log: Point2, phi: f64, eta: f64) -> Point2 {
    let gl = grad_log.norm();
    if !(gl >= 1e-12) {
        return Point2::ZERO;
    }
    let test_norm = p * gl;
    grad_log * (q_shape(test_norm, phi, eta) / gl)
}

/// `exp((φ − x)/η)`.
pub fn q_shape(x: f64, phi: f64, eta: f64) -> f64 {
    ((phi - x) / eta).exp()
}

/// Sets `φ`, `η` and the switching threshold from training frames (each
/// overridable through `cfg`).
pub fn calibrate(model: &ManifoldModel, frames: &[KeypointSet], cfg: &ManifoldConfig) -> Result<ManifoldModel> {
    if frames.is_empty() {
        return Err(Error::invalid("calibration needs at least one training frame"));
    }
    if frames.iter().any(|f| f.len() != model.n_keypoints()) {
        return Err(Error::invalid("frame keypoint count does not match the model"));
    }
    let mut norms: Vec<f64> = frames
        .iter()
        .flat_map(|f| f.iter().zip(&model.per_keypoint).map(|(&x, g)| g.grad(x).norm()))
        .collect();
    let phi = match cfg.phi {
        Some(v) => v,
        None => median(&mut norms),
    };
    let eta = cfg.eta.unwrap_or(cfg.eta_scale * phi);
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!("calibrated eta must be positive, got {eta}")));
    }
    let eps = match cfg.eps_rec {
        Some(v) => v,
        None => {
            let mut etas: Vec<f64> = frames.iter().map(|f| model.recovery_tuple(f).eta_rec).collect();
            lower_percentile(&mut etas, cfg.eps_percentile)
        }
    };
    if !(eps > 0.0) {
        return Err(Error::invalid(format!(
            "calibrated eps_rec must be positive, got {eps}"
        )));
    }
    Ok(ManifoldModel {
        q_phi: phi,
        q_eta: eta,
        eps_rec: eps,
        ..model.clone()
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// The value at sorted index `floor(p/100 · n)`, so at least `100 − p`
/// percent of the values are `>=` it.
fn lower_percentile(v: &mut [f64], p: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    let idx = ((p / 100.0) * v.len() as f64).floor() as usize;
    v[idx.min(v.len() - 1)]
}
