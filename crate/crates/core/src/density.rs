//! Log-density gradient ("score") estimators for the predictor distribution.
//!
//! Three assumptions are supported:
//!
//! * `Normal`: closed form `g(z) = −z` on whitened data.
//! * `Kernel`: Gaussian product-kernel density estimate, `ĝ = ∇f̂ / f̂`.
//! * `Elliptic`: a univariate kernel density over the radii `r = ‖z‖`
//!   combined with the radial Jacobian term `−(p − 1) z / r²`.
//!
//! Each estimator also returns `f̂` at the sample points and the trimming
//! indicator `Î_i = 1{f̂_i > b}` used by the candidate matrices. Points whose
//! density underflows (or whose radius is zero) are trimmed and counted
//! instead of raising an error, so bootstrap loops keep going.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

/// Radii below this are treated as the origin by the elliptic estimator.
pub const RADIUS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityAssumption {
    Normal,
    Kernel,
    Elliptic,
}

impl DensityAssumption {
    pub fn needs_bandwidth(self) -> bool {
        !matches!(self, DensityAssumption::Normal)
    }

    /// `b = 0` (no trimming) under normality, the 1% quantile of `f̂` otherwise.
    pub fn default_threshold(self) -> Threshold {
        match self {
            DensityAssumption::Normal => Threshold::Fixed(0.0),
            _ => Threshold::Quantile(0.01),
        }
    }
}

impl std::str::FromStr for DensityAssumption {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(Self::Normal),
            "kernel" => Ok(Self::Kernel),
            "elliptic" => Ok(Self::Elliptic),
            other => Err(format!("unknown density assumption '{other}'")),
        }
    }
}

/// How the trimming level `b` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum Threshold {
    /// Absolute density level.
    Fixed(f64),
    /// Empirical quantile of `f̂` (inverse-ECDF definition).
    Quantile(f64),
}

impl Threshold {
    pub fn resolve(self, fhat: &DVector<f64>) -> f64 {
        match self {
            Threshold::Fixed(b) => b,
            Threshold::Quantile(q) => empirical_quantile(fhat, q),
        }
    }
}

/// Inverse-ECDF quantile: the `⌈q·n⌉`-th smallest value (`−∞` for `q ≤ 0`).
pub fn empirical_quantile(v: &DVector<f64>, q: f64) -> f64 {
    let n = v.len();
    if n == 0 || q <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut s: Vec<f64> = v.iter().cloned().collect();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let k = ((q * n as f64).ceil() as usize).clamp(1, n);
    s[k - 1]
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreField {
    pub assumption: DensityAssumption,
    pub bandwidth: Option<f64>,
    /// `n × p` score evaluations at the sample points.
    pub g: DMatrix<f64>,
    pub fhat: DVector<f64>,
    pub indicator: Vec<bool>,
    pub threshold: f64,
    /// Points whose density estimate underflowed to zero.
    pub degenerate_count: usize,
    /// Points whose radius fell below [`RADIUS_TOL`] (elliptic only).
    pub zero_radius: Vec<usize>,
}

impl ScoreField {
    pub fn kept(&self) -> usize {
        self.indicator.iter().filter(|&&b| b).count()
    }

    /// Re-trim with a different threshold.
    pub fn with_threshold(mut self, threshold: Threshold) -> Self {
        let b = threshold.resolve(&self.fhat);
        self.threshold = b;
        self.indicator = self.fhat.iter().map(|&f| f > 0.0 && f > b).collect();
        for &i in &self.zero_radius {
            self.indicator[i] = false;
        }
        self
    }
}

/// `Î_i = 1` iff `f̂_i > b`.
pub fn apply_threshold(fhat: &DVector<f64>, b: f64) -> Vec<bool> {
    fhat.iter().map(|&f| f > b).collect()
}

/// Rule-of-thumb bandwidth for a `p`-variate Gaussian product kernel on
/// whitened data (Silverman).
pub fn default_kernel_bandwidth(n: usize, p: usize) -> f64 {
    let pf = p as f64;
    (4.0 / (pf + 2.0)).powf(1.0 / (pf + 4.0)) * (n as f64).powf(-1.0 / (pf + 4.0))
}

/// Silverman's univariate rule applied to the radii `‖z_i‖`.
pub fn default_radial_bandwidth(z: &DMatrix<f64>) -> f64 {
    let n = z.nrows();
    let r: Vec<f64> = z.row_iter().map(|row| row.norm()).collect();
    let mean = r.iter().sum::<f64>() / n as f64;
    let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
    let sd = var.sqrt().max(1e-3);
    1.06 * sd * (n as f64).powf(-0.2)
}

/// Score under the standard-normal assumption: `g = −z` exactly.
pub fn normal_score(z: &DMatrix<f64>) -> ScoreField {
    normal_score_with(z, DensityAssumption::Normal.default_threshold())
}

pub fn normal_score_with(z: &DMatrix<f64>, threshold: Threshold) -> ScoreField {
    let p = z.ncols() as f64;
    let norm_const = -0.5 * p * (2.0 * PI).ln();
    let fhat = DVector::from_iterator(
        z.nrows(),
        z.row_iter().map(|r| (norm_const - 0.5 * r.norm_squared()).exp()),
    );
    let b = threshold.resolve(&fhat);
    ScoreField {
        assumption: DensityAssumption::Normal,
        bandwidth: None,
        g: -z,
        indicator: apply_threshold(&fhat, b),
        fhat,
        threshold: b,
        degenerate_count: 0,
        zero_radius: Vec::new(),
    }
}

/// Gaussian product-kernel score at every sample point.
pub fn kernel_score(z: &DMatrix<f64>, h: f64) -> ScoreField {
    kernel_score_with(z, h, DensityAssumption::Kernel.default_threshold())
}

pub fn kernel_score_with(z: &DMatrix<f64>, h: f64, threshold: Threshold) -> ScoreField {
    assert!(h > 0.0, "bandwidth must be positive");
    let (n, p) = z.shape();
    let rows: Vec<DVector<f64>> = z.row_iter().map(|r| r.transpose()).collect();
    let log_norm = -(n as f64).ln() - p as f64 * h.ln() - 0.5 * p as f64 * (2.0 * PI).ln();

    let per_point: Vec<(f64, DVector<f64>)> = rows
        .par_iter()
        .map(|z0| {
            // log K((z0 - zl)/h) up to the shared constant
            let expo: Vec<f64> = rows
                .iter()
                .map(|zl| -0.5 * (z0 - zl).norm_squared() / (h * h))
                .collect();
            let m = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut wsum = 0.0;
            let mut grad = DVector::zeros(p);
            for (zl, e) in rows.iter().zip(&expo) {
                let w = (e - m).exp();
                wsum += w;
                // K'(u) = -u K(u), u = (z0 - zl)/h, chain rule adds 1/h
                grad.axpy(-w / (h * h), &(z0 - zl), 1.0);
            }
            let f = (log_norm + m + wsum.ln()).exp();
            (f, grad / wsum)
        })
        .collect();

    let mut g = DMatrix::zeros(n, p);
    let mut fhat = DVector::zeros(n);
    let mut degenerate = 0;
    for (i, (f, gi)) in per_point.into_iter().enumerate() {
        fhat[i] = f;
        if f > 0.0 {
            g.set_row(i, &gi.transpose());
        } else {
            degenerate += 1;
        }
    }
    let b = threshold.resolve(&fhat);
    ScoreField {
        assumption: DensityAssumption::Kernel,
        bandwidth: Some(h),
        indicator: fhat.iter().map(|&f| f > 0.0 && f > b).collect(),
        g,
        fhat,
        threshold: b,
        degenerate_count: degenerate,
        zero_radius: Vec::new(),
    }
}

/// Kernel density of the radii and its derivative, `(f̃(r), f̃'(r))`.
fn radial_density(r0: f64, radii: &[f64], h: f64) -> (f64, f64) {
    let n = radii.len() as f64;
    let c = 1.0 / (n * h * (2.0 * PI).sqrt());
    let mut f = 0.0;
    let mut df = 0.0;
    for &rl in radii {
        let u = (r0 - rl) / h;
        let k = (-0.5 * u * u).exp();
        f += k;
        df += -u * k;
    }
    (c * f, c * df / h)
}

/// Score under an elliptically contoured distribution.
pub fn elliptic_score(z: &DMatrix<f64>, h: f64) -> ScoreField {
    elliptic_score_with(z, h, DensityAssumption::Elliptic.default_threshold())
}

pub fn elliptic_score_with(z: &DMatrix<f64>, h: f64, threshold: Threshold) -> ScoreField {
    assert!(h > 0.0, "bandwidth must be positive");
    let (n, p) = z.shape();
    let pf = p as f64;
    let radii: Vec<f64> = z.row_iter().map(|r| r.norm()).collect();
    // log surface area of the unit sphere in R^p
    let log_area = (2.0f64).ln() + 0.5 * pf * PI.ln() - ln_gamma(0.5 * pf);

    let per_point: Vec<(f64, f64)> = radii
        .par_iter()
        .map(|&r| radial_density(r, &radii, h))
        .collect();

    let mut g = DMatrix::zeros(n, p);
    let mut fhat = DVector::zeros(n);
    let mut zero_radius = Vec::new();
    let mut degenerate = 0;
    for i in 0..n {
        let r = radii[i];
        let (f, df) = per_point[i];
        if r < RADIUS_TOL {
            zero_radius.push(i);
            continue;
        }
        if f <= 0.0 {
            degenerate += 1;
            continue;
        }
        // density of x implied by the radial density f̃
        fhat[i] = (f.ln() - log_area - (pf - 1.0) * r.ln()).exp();
        let zi = z.row(i);
        let coef = (df / f) / r - (pf - 1.0) / (r * r);
        g.set_row(i, &(zi * coef));
    }
    let b = threshold.resolve(&fhat);
    let mut indicator: Vec<bool> = fhat.iter().map(|&f| f > 0.0 && f > b).collect();
    for &i in &zero_radius {
        indicator[i] = false;
    }
    ScoreField {
        assumption: DensityAssumption::Elliptic,
        bandwidth: Some(h),
        g,
        fhat,
        indicator,
        threshold: b,
        degenerate_count: degenerate,
        zero_radius,
    }
}

/// Dispatch on the assumption; `h = None` picks the rule-of-thumb bandwidth.
pub fn score_field(
    z: &DMatrix<f64>,
    assumption: DensityAssumption,
    h: Option<f64>,
    threshold: Option<Threshold>,
) -> ScoreField {
    let threshold = threshold.unwrap_or(assumption.default_threshold());
    match assumption {
        DensityAssumption::Normal => normal_score_with(z, threshold),
        DensityAssumption::Kernel => {
            let h = h.unwrap_or_else(|| default_kernel_bandwidth(z.nrows(), z.ncols()));
            kernel_score_with(z, h, threshold)
        }
        DensityAssumption::Elliptic => {
            let h = h.unwrap_or_else(|| default_radial_bandwidth(z));
            elliptic_score_with(z, h, threshold)
        }
    }
}

/// Log of the kernel density estimate at an arbitrary point, used by the
/// finite-difference checks.
pub fn kernel_log_density(z: &DMatrix<f64>, h: f64, at: &DVector<f64>) -> f64 {
    let (n, p) = z.shape();
    let expo: Vec<f64> = z
        .row_iter()
        .map(|zl| -0.5 * (at - zl.transpose()).norm_squared() / (h * h))
        .collect();
    let m = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = expo.iter().map(|e| (e - m).exp()).sum();
    -(n as f64).ln() - p as f64 * h.ln() - 0.5 * p as f64 * (2.0 * PI).ln() + m + s.ln()
}
