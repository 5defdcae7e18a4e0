//! Candidate matrices from pairwise kernel sums.
//!
//! For a pair of observations the kernel is
//!
//! ```text
//! U(1,2) = R(y1, y2) · w(u) · [a I + (g1 − a u)(g2 + a u)ᵀ],   u = z1 − z2
//! ```
//!
//! with `a = σ_u²`, `w = exp(−σ_u² ‖u‖² / 2)` for the Fourier method and
//! `a = 1/(2σ_u²)`, `w = exp(−‖u‖² / (4σ_u²))` for the convolution method.
//! The response factor `R` is `y1·y2` when targeting the mean subspace and a
//! Gaussian in `v = y1 − y2` when targeting the full conditional distribution.
//!
//! The sample matrix averages `U` over all `n²` ordered pairs (diagonal
//! included), keeping only points that survive density trimming. Writing
//! `α_i = g_i − a z_i` turns the double sum into a handful of weighted Gram
//! products, which is what [`build_candidate`] evaluates; the pairwise loop
//! lives in [`crate::synth::oracle_candidate`] as the reference.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{standardize, CandidateMatrix, Dataset, Recipe, StandardizedSample};
use crate::density::{score_field, DensityAssumption, ScoreField, Threshold};
use crate::error::{Result, SdrError};
use crate::linalg::symmetrize;
use crate::subspace::{extract_basis, SubspaceBasis};

const BLOCK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    /// Central mean subspace.
    Mean,
    /// Central subspace.
    Pdf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    FM,
    CM,
}

impl std::str::FromStr for Space {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mean" | "cms" => Ok(Space::Mean),
            "pdf" | "cs" => Ok(Space::Pdf),
            other => Err(format!("unknown space '{other}' (expected mean or pdf)")),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "FM" => Ok(Method::FM),
            "CM" => Ok(Method::CM),
            other => Err(format!("unknown method '{other}' (expected FM or CM)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItmConfig {
    pub space: Space,
    pub method: Method,
    /// σ_u²
    pub sw2: f64,
    /// σ_v², used only for `Space::Pdf`.
    pub st2: f64,
    pub density: DensityAssumption,
    /// Bandwidth for kernel/elliptic scores; rule of thumb when absent.
    pub h: Option<f64>,
    /// Trimming rule; the density's default when absent.
    pub threshold: Option<Threshold>,
    /// Use the raw response instead of the standardized one.
    pub raw_y: bool,
}

impl Default for ItmConfig {
    fn default() -> Self {
        Self {
            space: Space::Mean,
            method: Method::FM,
            sw2: 0.1,
            st2: 1.0,
            density: DensityAssumption::Normal,
            h: None,
            threshold: None,
            raw_y: false,
        }
    }
}

impl ItmConfig {
    pub fn recipe(&self) -> Recipe {
        match (self.method, self.space) {
            (Method::FM, Space::Mean) => Recipe::Fmm,
            (Method::FM, Space::Pdf) => Recipe::Fmc,
            (Method::CM, Space::Mean) => Recipe::Cmm,
            (Method::CM, Space::Pdf) => Recipe::Cmc,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sw2 > 0.0 && self.sw2.is_finite()) {
            return Err(SdrError::InvalidConfig(format!("sw2 must be positive, got {}", self.sw2)));
        }
        if self.space == Space::Pdf && !(self.st2 > 0.0 && self.st2.is_finite()) {
            return Err(SdrError::InvalidConfig(format!("st2 must be positive, got {}", self.st2)));
        }
        if let Some(h) = self.h {
            if !(h > 0.0 && h.is_finite()) {
                return Err(SdrError::InvalidConfig(format!("bandwidth must be positive, got {h}")));
            }
        }
        Ok(())
    }

    /// Coefficient `a` in `a I + (g1 − a u)(g2 + a u)ᵀ`.
    pub fn coef(&self) -> f64 {
        match self.method {
            Method::FM => self.sw2,
            Method::CM => 1.0 / (2.0 * self.sw2),
        }
    }

    /// Predictor weight `w(u)` as a function of `‖u‖²`.
    pub fn x_weight(&self, u2: f64) -> f64 {
        match self.method {
            Method::FM => (-0.5 * self.sw2 * u2).exp(),
            Method::CM => (-u2 / (4.0 * self.sw2)).exp(),
        }
    }

    /// Response factor `R(y1, y2)`.
    pub fn y_factor(&self, y1: f64, y2: f64) -> f64 {
        match self.space {
            Space::Mean => y1 * y2,
            Space::Pdf => {
                let v = y1 - y2;
                match self.method {
                    Method::FM => (-0.5 * self.st2 * v * v).exp(),
                    Method::CM => (-v * v / (4.0 * self.st2)).exp(),
                }
            }
        }
    }
}

/// Pair kernel for the Fourier method, mean subspace.
pub fn pair_kernel_fmm(
    z1: &DVector<f64>,
    z2: &DVector<f64>,
    y1: f64,
    y2: f64,
    g1: &DVector<f64>,
    g2: &DVector<f64>,
    sw2: f64,
) -> DMatrix<f64> {
    let cfg = ItmConfig {
        sw2,
        ..ItmConfig::default()
    };
    pair_kernel(&cfg, z1, z2, y1, y2, g1, g2)
}

/// Pair kernel `U(1,2)` for any recipe.
pub fn pair_kernel(
    cfg: &ItmConfig,
    z1: &DVector<f64>,
    z2: &DVector<f64>,
    y1: f64,
    y2: f64,
    g1: &DVector<f64>,
    g2: &DVector<f64>,
) -> DMatrix<f64> {
    let p = z1.len();
    let a = cfg.coef();
    let u = z1 - z2;
    let scale = cfg.y_factor(y1, y2) * cfg.x_weight(u.norm_squared());
    let left = g1 - &u * a;
    let right = g2 + &u * a;
    (DMatrix::identity(p, p) * a + left * right.transpose()) * scale
}

/// Sample candidate matrix `n⁻² Σ_i Σ_j U(Z_i, Z_j) Î_i Î_j`, symmetrized.
pub fn build_candidate(
    sample: &StandardizedSample,
    scores: &ScoreField,
    cfg: &ItmConfig,
) -> Result<CandidateMatrix> {
    cfg.validate()?;
    let (n, p) = sample.z.shape();
    if sample.y_std.ncols() != 1 {
        return Err(SdrError::InvalidData(
            "candidate matrices need a univariate response".into(),
        ));
    }
    if scores.g.shape() != (n, p) {
        return Err(SdrError::InvalidData("score field does not match the sample".into()));
    }
    if !scores.indicator.iter().any(|&b| b) {
        return Err(SdrError::AllPointsTrimmed);
    }

    let a = cfg.coef();
    let y = sample.y_vec();
    let z = &sample.z;
    let alpha = &scores.g - z * a;
    let keep: Vec<f64> = scores.indicator.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let sq: Vec<f64> = z.row_iter().map(|r| r.norm_squared()).collect();

    let starts: Vec<usize> = (0..n).step_by(BLOCK).collect();
    // per block: (Σ W, Aᵀ W A, Aᵀ diag(s) Z, Zᵀ W Z)
    let partials: Vec<(f64, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> = starts
        .par_iter()
        .map(|&start| {
            let rows = BLOCK.min(n - start);
            let mut w = DMatrix::zeros(rows, n);
            for bi in 0..rows {
                let i = start + bi;
                if keep[i] == 0.0 {
                    continue;
                }
                let zi = z.row(i);
                for j in 0..n {
                    if keep[j] == 0.0 {
                        continue;
                    }
                    let u2 = (sq[i] + sq[j] - 2.0 * zi.dot(&z.row(j))).max(0.0);
                    w[(bi, j)] = cfg.y_factor(y[i], y[j]) * cfg.x_weight(u2);
                }
            }
            let a_b = alpha.rows(start, rows);
            let z_b = z.rows(start, rows);
            let s = DVector::from_iterator(rows, w.row_iter().map(|r| r.sum()));
            let wa = &w * &alpha;
            let wz = &w * z;
            let mut sz = z_b.into_owned();
            for (k, mut r) in sz.row_iter_mut().enumerate() {
                r *= s[k];
            }
            (s.sum(), a_b.transpose() * wa, a_b.transpose() * sz, z_b.transpose() * wz)
        })
        .collect();

    let mut total = 0.0;
    let mut awa = DMatrix::zeros(p, p);
    let mut asz = DMatrix::zeros(p, p);
    let mut zwz = DMatrix::zeros(p, p);
    for (t, b1, b2, b3) in partials {
        total += t;
        awa += b1;
        asz += b2;
        zwz += b3;
    }
    let mut m = DMatrix::identity(p, p) * (a * total)
        + awa
        + &asz * a
        + asz.transpose() * a
        + zwz * (a * a);
    m /= (n * n) as f64;
    Ok(CandidateMatrix {
        m: symmetrize(&m),
        recipe: cfg.recipe(),
        density: Some(cfg.density),
    })
}

/// Scores for a whitened sample as requested by `cfg`.
pub fn scores_for(sample: &StandardizedSample, cfg: &ItmConfig) -> ScoreField {
    score_field(&sample.z, cfg.density, cfg.h, cfg.threshold)
}

/// Standardize, score, build the candidate matrix and extract `d` directions.
pub fn itm_estimate(
    data: &Dataset,
    cfg: &ItmConfig,
    d: usize,
) -> Result<(SubspaceBasis, CandidateMatrix)> {
    let sample = standardize(data, !cfg.raw_y)?;
    let scores = scores_for(&sample, cfg);
    let cand = build_candidate(&sample, &scores, cfg)?;
    let basis = extract_basis(&cand, d, &sample.sigma_inv_sqrt)?;
    Ok((basis, cand))
}
