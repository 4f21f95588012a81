//! Two-dimensional Gaussian mixtures fitted by expectation-maximization.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point2;

/// Symmetric 2×2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cov2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Cov2 {
    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub const fn isotropic(v: f64) -> Self {
        Self::new(v, 0.0, v)
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn inverse(&self) -> Cov2 {
        let d = self.det();
        Cov2::new(self.yy / d, -self.xy / d, self.xx / d)
    }

    pub fn mul(&self, v: Point2) -> Point2 {
        Point2::new(self.xx * v.x + self.xy * v.y, self.xy * v.x + self.yy * v.y)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let m = 0.5 * (self.xx + self.yy);
        let r = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        m - r
    }

    /// Lower Cholesky factor `(l11, l21, l22)`, or `None` if not positive definite.
    pub fn cholesky(&self) -> Option<(f64, f64, f64)> {
        if !(self.xx > 0.0) {
            return None;
        }
        let l11 = self.xx.sqrt();
        let l21 = self.xy / l11;
        let rest = self.yy - l21 * l21;
        if !(rest > 0.0) {
            return None;
        }
        Some((l11, l21, rest.sqrt()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: Point2,
    pub cov: Cov2,
}

/// A mixture of bivariate normals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub components: Vec<Component>,
}

/// Per-component constants for fast evaluation.
#[derive(Debug, Clone, Copy)]
struct Prepared {
    log_w_norm: f64,
    mean: Point2,
    prec: Cov2,
}

impl Prepared {
    fn new(c: &Component) -> Self {
        Self {
            log_w_norm: c.weight.ln() - (2.0 * PI).ln() - 0.5 * c.cov.det().ln(),
            mean: c.mean,
            prec: c.cov.inverse(),
        }
    }

    /// `ln(λ N(x; μ, Σ))` and `Σ⁻¹(μ − x)`.
    fn eval(&self, x: Point2) -> (f64, Point2) {
        let d = x - self.mean;
        let pd = self.prec.mul(d);
        (self.log_w_norm - 0.5 * d.dot(pd), -pd)
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|&a| (a - m).exp()).sum::<f64>().ln()
}

impl GmmParams {
    pub fn single(mean: Point2, cov: Cov2) -> Self {
        Self {
            components: vec![Component { weight: 1.0, mean, cov }],
        }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    fn prepared(&self) -> Vec<Prepared> {
        self.components.iter().map(Prepared::new).collect()
    }

    pub fn log_density(&self, x: Point2) -> f64 {
        let terms: Vec<f64> = self.prepared().iter().map(|p| p.eval(x).0).collect();
        log_sum_exp(&terms)
    }

    /// Mixture pdf; underflows to zero far from the mass.
    pub fn density(&self, x: Point2) -> f64 {
        self.log_density(x).exp()
    }

    /// `∇p(x)` in linear scale.
    pub fn grad(&self, x: Point2) -> Point2 {
        self.prepared().iter().fold(Point2::ZERO, |acc, p| {
            let (l, g) = p.eval(x);
            acc + g * l.exp()
        })
    }

    /// `∇ ln p(x)`, a responsibility-weighted sum of per-component pulls.
    /// Finite wherever the parameters are.
    pub fn grad_log(&self, x: Point2) -> Point2 {
        let evals: Vec<(f64, Point2)> = self.prepared().iter().map(|p| p.eval(x)).collect();
        let m = evals.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
        let mut num = Point2::ZERO;
        let mut den = 0.0;
        for (l, g) in evals {
            let w = (l - m).exp();
            num = num + g * w;
            den += w;
        }
        num * (1.0 / den)
    }

    /// Density and `∇ ln p` together, sharing the component evaluations.
    pub fn density_and_grad_log(&self, x: Point2) -> (f64, Point2) {
        let evals: Vec<(f64, Point2)> = self.prepared().iter().map(|p| p.eval(x)).collect();
        let m = evals.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
        let mut num = Point2::ZERO;
        let mut den = 0.0;
        for (l, g) in evals {
            let w = (l - m).exp();
            num = num + g * w;
            den += w;
        }
        ((m + den.ln()).exp(), num * (1.0 / den))
    }

    /// Mean log-likelihood per point.
    pub fn mean_log_likelihood(&self, points: &[Point2]) -> f64 {
        let prep = self.prepared();
        let mut buf = vec![0.0; prep.len()];
        let total: f64 = points
            .iter()
            .map(|&x| {
                for (b, p) in buf.iter_mut().zip(&prep) {
                    *b = p.eval(x).0;
                }
                log_sum_exp(&buf)
            })
            .sum();
        total / points.len() as f64
    }

    /// Free parameters: weights (minus one), means, covariances.
    pub fn n_parameters(&self) -> usize {
        6 * self.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    /// Stop when the mean log-likelihood gains less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Independent k-means++ restarts; the best final likelihood wins.
    pub n_init: usize,
    /// Covariance floor, relative to the data variance.
    pub reg_rel: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 300,
            n_init: 8,
            reg_rel: 1e-6,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol >= 0.0) || self.max_iter == 0 || self.n_init == 0 || !(self.reg_rel > 0.0) {
            return Err(Error::config(
                "em: need tol >= 0, max_iter >= 1, n_init >= 1, reg_rel > 0",
            ));
        }
        Ok(())
    }
}

/// A fitted mixture with its training record.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub params: GmmParams,
    /// Mean log-likelihood per point of `params`.
    pub log_likelihood: f64,
    /// Mean log-likelihood of each EM iterate of the winning restart.
    pub history: Vec<f64>,
    pub reg_floor: f64,
}

/// Covariance floor used for `points`: `reg_rel` times the mean per-axis
/// variance (or times one when the data has no spread).
pub fn reg_floor(points: &[Point2], reg_rel: f64) -> f64 {
    let n = points.len() as f64;
    let mean = points.iter().fold(Point2::ZERO, |a, &p| a + p) * (1.0 / n);
    let var = points.iter().map(|&p| (p - mean).norm_sq()).sum::<f64>() / (2.0 * n);
    reg_rel * if var > 0.0 { var } else { 1.0 }
}

/// Fits an `m`-component mixture by EM from k-means++ starts.
pub fn fit_em(points: &[Point2], m: usize, cfg: &EmConfig) -> Result<GmmFit> {
    cfg.validate()?;
    if m == 0 {
        return Err(Error::invalid("mixture needs at least one component"));
    }
    if points.len() < m {
        return Err(Error::invalid(format!(
            "{} points cannot fit {m} components",
            points.len()
        )));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("non-finite training point"));
    }
    let reg = reg_floor(points, cfg.reg_rel);
    let mut best: Option<GmmFit> = None;
    for restart in 0..cfg.n_init {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(restart as u64);
        let labels = kmeans(points, m, &mut rng);
        let init = hard_m_step(points, &labels, m, reg);
        let fit = run_em(points, init, reg, cfg);
        if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
            best = Some(fit);
        }
    }
    Ok(best.expect("n_init >= 1"))
}

/// k-means++ seeding followed by a few Lloyd iterations; returns labels.
fn kmeans<R: Rng>(points: &[Point2], m: usize, rng: &mut R) -> Vec<usize> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = points.iter().map(|p| p.distance(centers[0]).powi(2)).collect();
    while centers.len() < m {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick];
        centers.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(p.distance(c).powi(2));
        }
    }
    let mut labels = vec![0; n];
    for _ in 0..20 {
        let mut changed = false;
        for (l, p) in labels.iter_mut().zip(points) {
            let best = (0..m)
                .min_by(|&a, &b| p.distance(centers[a]).total_cmp(&p.distance(centers[b])))
                .unwrap();
            changed |= *l != best;
            *l = best;
        }
        let mut sum = vec![Point2::ZERO; m];
        let mut count = vec![0usize; m];
        for (&l, &p) in labels.iter().zip(points) {
            sum[l] = sum[l] + p;
            count[l] += 1;
        }
        for j in 0..m {
            if count[j] > 0 {
                centers[j] = sum[j] * (1.0 / count[j] as f64);
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

fn hard_m_step(points: &[Point2], labels: &[usize], m: usize, reg: f64) -> GmmParams {
    let mut resp = vec![0.0; points.len() * m];
    for (i, &l) in labels.iter().enumerate() {
        resp[i * m + l] = 1.0;
    }
    let fallback = GmmParams {
        components: (0..m)
            .map(|_| Component {
                weight: 1.0 / m as f64,
                mean: points[0],
                cov: Cov2::isotropic(reg),
            })
            .collect(),
    };
    m_step(points, &resp, m, reg, &fallback)
}

/// Re-estimates weights, means and floored covariances from responsibilities.
/// Components that lost all mass keep their previous mean and covariance.
fn m_step(points: &[Point2], resp: &[f64], m: usize, reg: f64, prev: &GmmParams) -> GmmParams {
    let n = points.len();
    let mut mass = vec![0.0; m];
    let mut sum = vec![Point2::ZERO; m];
    for (i, &p) in points.iter().enumerate() {
        for j in 0..m {
            let r = resp[i * m + j];
            mass[j] += r;
            sum[j] = sum[j] + p * r;
        }
    }
    let means: Vec<Point2> = (0..m)
        .map(|j| {
            if mass[j] > 0.0 {
                sum[j] * (1.0 / mass[j])
            } else {
                prev.components[j].mean
            }
        })
        .collect();
    let mut s = vec![(0.0, 0.0, 0.0); m];
    for (i, &p) in points.iter().enumerate() {
        for j in 0..m {
            let r = resp[i * m + j];
            let d = p - means[j];
            s[j].0 += r * d.x * d.x;
            s[j].1 += r * d.x * d.y;
            s[j].2 += r * d.y * d.y;
        }
    }
    let floor = f64::MIN_POSITIVE.sqrt();
    let raw: Vec<f64> = mass.iter().map(|&w| (w / n as f64).max(floor)).collect();
    let total: f64 = raw.iter().sum();
    GmmParams {
        components: (0..m)
            .map(|j| {
                let cov = if mass[j] > 0.0 {
                    let k = 1.0 / mass[j];
                    Cov2::new(s[j].0 * k + reg, s[j].1 * k, s[j].2 * k + reg)
                } else {
                    prev.components[j].cov
                };
                Component {
                    weight: raw[j] / total,
                    mean: means[j],
                    cov,
                }
            })
            .collect(),
    }
}

fn run_em(points: &[Point2], init: GmmParams, reg: f64, cfg: &EmConfig) -> GmmFit {
    let m = init.len();
    let n = points.len();
    let mut params = init;
    let mut resp = vec![0.0; n * m];
    let mut history = Vec::new();
    for iter in 0..=cfg.max_iter {
        let prep = params.prepared();
        let mut total = 0.0;
        for (i, &x) in points.iter().enumerate() {
            let row = &mut resp[i * m..(i + 1) * m];
            for (r, p) in row.iter_mut().zip(&prep) {
                *r = p.eval(x).0;
            }
            let lse = log_sum_exp(row);
            total += lse;
            for r in row.iter_mut() {
                *r = (*r - lse).exp();
            }
        }
        let ll = total / n as f64;
        let converged = history.last().is_some_and(|&prev: &f64| ll - prev < cfg.tol);
        history.push(ll);
        if converged || iter == cfg.max_iter {
            break;
        }
        params = m_step(points, &resp, m, reg, &params);
    }
    GmmFit {
        params,
        log_likelihood: *history.last().unwrap(),
        history,
        reg_floor: reg,
    }
}

/// Bayesian information criterion of a fit on `n` points.
pub fn bic(fit: &GmmFit, n: usize) -> f64 {
    -2.0 * fit.log_likelihood * n as f64 + fit.params.n_parameters() as f64 * (n as f64).ln()
}

/// Fits every `m` in `range` and keeps the lowest BIC.
pub fn select_by_bic(points: &[Point2], range: std::ops::RangeInclusive<usize>, cfg: &EmConfig) -> Result<GmmFit> {
    let mut best: Option<(f64, GmmFit)> = None;
    for m in range {
        if m > points.len() {
            break;
        }
        let fit = fit_em(points, m, cfg)?;
        let score = bic(&fit, points.len());
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, fit));
        }
    }
    best.map(|(_, f)| f)
        .ok_or_else(|| Error::invalid("empty component range"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn normal_cloud(center: Point2, sigma: f64, n: usize, seed: u64) -> Vec<Point2> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, sigma).unwrap();
        (0..n)
            .map(|_| center + Point2::new(d.sample(&mut rng), d.sample(&mut rng)))
            .collect()
    }

    fn mean(points: &[Point2]) -> Point2 {
        points.iter().fold(Point2::ZERO, |a, &p| a + p) * (1.0 / points.len() as f64)
    }

    #[test]
    fn standard_normal_peak() {
        let g = GmmParams::single(Point2::ZERO, Cov2::isotropic(1.0));
        assert!((g.density(Point2::ZERO) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let half = Component {
            weight: 0.5,
            mean: Point2::new(3.0, -1.0),
            cov: Cov2::new(2.0, 0.3, 1.0),
        };
        let two = GmmParams {
            components: vec![half.clone(), half.clone()],
        };
        let one = GmmParams::single(half.mean, half.cov);
        for x in [Point2::new(0.0, 0.0), Point2::new(3.5, -2.0), Point2::new(10.0, 4.0)] {
            assert!((two.density(x) - one.density(x)).abs() <= 1e-15 * one.density(x).max(1e-300));
        }
    }

    #[test]
    fn density_integrates_to_one() {
        let g = GmmParams {
            components: vec![
                Component {
                    weight: 0.3,
                    mean: Point2::new(0.0, 0.0),
                    cov: Cov2::new(4.0, 1.0, 2.0),
                },
                Component {
                    weight: 0.7,
                    mean: Point2::new(3.0, 1.0),
                    cov: Cov2::new(1.0, -0.2, 3.0),
                },
            ],
        };
        // 6 sigma around both components, midpoint rule
        let (lo, hi, n) = (-12.0, 15.0, 1200);
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                total += g.density(Point2::new(lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h));
            }
        }
        assert!((total * h * h - 1.0).abs() < 1e-3, "{}", total * h * h);
    }

    #[test]
    fn gradient_examples() {
        let g = GmmParams::single(Point2::ZERO, Cov2::isotropic(1.0));
        assert_eq!(g.grad(Point2::ZERO), Point2::ZERO);
        let x = Point2::new(1.0, 0.0);
        let h = 1e-5;
        let fd = (g.density(x + Point2::new(h, 0.0)) - g.density(x - Point2::new(h, 0.0))) / (2.0 * h);
        assert!((g.grad(x).x - fd).abs() <= 1e-6 * fd.abs());
        assert!(g.grad(x).y.abs() < 1e-18);
    }

    #[test]
    fn grad_log_survives_underflow() {
        let g = GmmParams::single(Point2::new(5.0, 5.0), Cov2::isotropic(4.0));
        let x = Point2::new(5.0 + 600.0, 5.0);
        assert_eq!(g.density(x), 0.0);
        // ln N has gradient Σ⁻¹(μ − x) = (-600/4, 0)
        let gl = g.grad_log(x);
        assert!((gl.x + 150.0).abs() < 1e-9 && gl.y.abs() < 1e-12, "{gl:?}");
    }

    #[test]
    fn single_gaussian_mean() {
        let pts = normal_cloud(Point2::new(40.0, -7.0), 3.0, 1000, 1);
        let fit = fit_em(&pts, 1, &EmConfig::default()).unwrap();
        let mu = fit.params.components[0].mean;
        assert!(mu.distance(mean(&pts)) < 3.0 * 3.0 / 1000f64.sqrt());
    }

    #[test]
    fn identical_points_hit_the_floor() {
        let pts = vec![Point2::new(2.0, 3.0); 50];
        let fit = fit_em(&pts, 1, &EmConfig::default()).unwrap();
        let c = &fit.params.components[0];
        assert_eq!(c.mean, Point2::new(2.0, 3.0));
        assert_eq!(c.cov, Cov2::isotropic(fit.reg_floor));
        assert!(fit.log_likelihood.is_finite());
    }

    #[test]
    fn two_clusters_recovered() {
        let a = normal_cloud(Point2::new(100.0, 100.0), 10.0, 500, 2);
        let b = normal_cloud(Point2::new(400.0, 400.0), 10.0, 500, 3);
        let pts: Vec<Point2> = a.iter().chain(&b).copied().collect();
        let fit = fit_em(&pts, 2, &EmConfig::default()).unwrap();
        let mut mus: Vec<Point2> = fit.params.components.iter().map(|c| c.mean).collect();
        mus.sort_by(|p, q| p.x.total_cmp(&q.x));
        assert!(mus[0].distance(mean(&a)) < 2.0);
        assert!(mus[1].distance(mean(&b)) < 2.0);
    }

    #[test]
    fn bad_inputs_rejected() {
        let cfg = EmConfig::default();
        assert!(fit_em(&[Point2::ZERO], 2, &cfg).is_err());
        assert!(fit_em(&[Point2::new(f64::NAN, 0.0), Point2::ZERO], 1, &cfg).is_err());
    }

    #[test]
    fn bic_prefers_true_count() {
        let mut pts = normal_cloud(Point2::new(0.0, 0.0), 5.0, 300, 4);
        pts.extend(normal_cloud(Point2::new(80.0, 0.0), 5.0, 300, 5));
        pts.extend(normal_cloud(Point2::new(40.0, 70.0), 5.0, 300, 6));
        let fit = select_by_bic(&pts, 1..=5, &EmConfig::default()).unwrap();
        assert_eq!(fit.params.len(), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn fitted_params_are_normalized(seed in 0u64..1000, m in 1usize..6) {
            let mut pts = normal_cloud(Point2::new(0.0, 0.0), 7.0, 150, seed);
            pts.extend(normal_cloud(Point2::new(30.0, 10.0), 3.0, 100, seed + 1));
            let fit = fit_em(&pts, m, &EmConfig { n_init: 2, ..EmConfig::default() }).unwrap();
            let s: f64 = fit.params.components.iter().map(|c| c.weight).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            for c in &fit.params.components {
                prop_assert!(c.weight > 0.0);
                prop_assert!(c.cov.cholesky().is_some());
                prop_assert!(c.cov.min_eigenvalue() >= fit.reg_floor * (1.0 - 1e-9));
            }
        }

        #[test]
        fn grad_log_is_parallel_to_grad(seed in 0u64..1000, x in -30.0..30.0f64, y in -30.0..30.0f64) {
            let pts = normal_cloud(Point2::new(0.0, 0.0), 8.0, 200, seed);
            let g = fit_em(&pts, 3, &EmConfig { n_init: 1, ..EmConfig::default() }).unwrap().params;
            let p = Point2::new(x, y);
            let (a, b) = (g.grad(p), g.grad_log(p));
            prop_assume!(a.norm() > 0.0 && b.norm() > 0.0);
            prop_assert!(a.dot(b) / (a.norm() * b.norm()) >= 1.0 - 1e-9);
            prop_assert!((a.norm() / b.norm() - g.density(p)).abs() <= 1e-9 * g.density(p));
        }
    }
}
