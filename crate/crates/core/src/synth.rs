//! Synthetic regression models with known subspaces, plus brute-force
//! reference implementations used by the tests.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{CandidateMatrix, Dataset, StandardizedSample};
use crate::density::ScoreField;
use crate::error::{Result, SdrError};
use crate::itm::{pair_kernel, ItmConfig};
use crate::linalg::symmetrize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// `y_c = u_{c mod d}` with `u = Γᵀx`, `Γ = (e_1, …, e_d)`, `d = min(q, p)`.
    Linear,
    /// `y = (e_1ᵀx)³`.
    CubicSingleIndex,
    /// `y = (e_1ᵀx)³ + |e_2ᵀx|`.
    DoubleIndex,
    /// `y = (x_1 + x_2)³`, support `{1, 2}`.
    SparseSupport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XDist {
    Normal,
    /// Multivariate t with 5 degrees of freedom, rescaled to unit covariance.
    EllipticT,
    /// Independent uniform on `(−√3, √3)`.
    Uniform,
}

impl std::str::FromStr for Model {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Model::Linear),
            "cubic_single_index" | "cubic" => Ok(Model::CubicSingleIndex),
            "double_index" => Ok(Model::DoubleIndex),
            "sparse_support" | "sparse" => Ok(Model::SparseSupport),
            other => Err(format!("unknown model '{other}'")),
        }
    }
}

impl std::str::FromStr for XDist {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "normal" => Ok(XDist::Normal),
            "elliptic_t" | "t" => Ok(XDist::EllipticT),
            "uniform" => Ok(XDist::Uniform),
            other => Err(format!("unknown x distribution '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub model: Model,
    pub noise_sd: f64,
    pub x_dist: XDist,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(n: usize, p: usize, model: Model, seed: u64) -> Self {
        Self {
            n,
            p,
            q: 1,
            model,
            noise_sd: 0.1,
            x_dist: XDist::Normal,
            seed,
        }
    }

    pub fn true_basis(&self) -> DMatrix<f64> {
        let p = self.p;
        match self.model {
            Model::Linear => {
                let d = self.q.min(p);
                DMatrix::from_fn(p, d, |i, j| if i == j { 1.0 } else { 0.0 })
            }
            Model::CubicSingleIndex => DMatrix::from_fn(p, 1, |i, _| if i == 0 { 1.0 } else { 0.0 }),
            Model::DoubleIndex => DMatrix::from_fn(p, 2, |i, j| if i == j { 1.0 } else { 0.0 }),
            Model::SparseSupport => {
                let r = std::f64::consts::FRAC_1_SQRT_2;
                DMatrix::from_fn(p, 1, |i, _| if i < 2 { r } else { 0.0 })
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let need = match self.model {
            Model::Linear | Model::CubicSingleIndex => 1,
            Model::DoubleIndex | Model::SparseSupport => 2,
        };
        if self.n < 2 || self.q == 0 || self.p < need {
            return Err(SdrError::InvalidConfig(format!(
                "model {:?} needs n ≥ 2, q ≥ 1 and p ≥ {need}",
                self.model
            )));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(SdrError::InvalidConfig("noise_sd must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub data: Dataset,
    pub basis: DMatrix<f64>,
}

fn draw_x(rng: &mut ChaCha8Rng, n: usize, p: usize, dist: XDist) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, p);
    let chi = ChiSquared::new(5.0).expect("valid dof");
    let t_scale = (3.0f64 / 5.0).sqrt();
    let half = 3f64.sqrt();
    for i in 0..n {
        match dist {
            XDist::Normal => {
                for j in 0..p {
                    x[(i, j)] = rng.sample::<f64, _>(StandardNormal);
                }
            }
            XDist::EllipticT => {
                let w: f64 = chi.sample(rng);
                let s = t_scale / (w / 5.0).sqrt();
                for j in 0..p {
                    x[(i, j)] = s * rng.sample::<f64, _>(StandardNormal);
                }
            }
            XDist::Uniform => {
                for j in 0..p {
                    x[(i, j)] = rng.random_range(-half..half);
                }
            }
        }
    }
    x
}

/// Draw a dataset; identical specs give bitwise-identical output.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let x = draw_x(&mut rng, spec.n, spec.p, spec.x_dist);
    let basis = spec.true_basis();
    let u = &x * &basis;
    let d = basis.ncols();
    let mut y = DMatrix::zeros(spec.n, spec.q);
    for i in 0..spec.n {
        for c in 0..spec.q {
            let signal = match spec.model {
                Model::Linear => u[(i, c % d)],
                Model::CubicSingleIndex => u[(i, 0)].powi(3),
                Model::DoubleIndex => u[(i, 0)].powi(3) + u[(i, 1)].abs(),
                Model::SparseSupport => (x[(i, 0)] + x[(i, 1)]).powi(3),
            };
            let eps: f64 = if spec.noise_sd > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            y[(i, c)] = signal + spec.noise_sd * eps;
        }
    }
    Ok(SynthData {
        data: Dataset::new(x, y)?,
        basis,
    })
}

/// Candidate matrix by the plain `O(n²)` pairwise loop.
pub fn oracle_candidate(
    sample: &StandardizedSample,
    scores: &ScoreField,
    cfg: &ItmConfig,
) -> Result<CandidateMatrix> {
    cfg.validate()?;
    let (n, p) = sample.z.shape();
    if !scores.indicator.iter().any(|&b| b) {
        return Err(SdrError::AllPointsTrimmed);
    }
    let y = sample.y_vec();
    let mut m = DMatrix::zeros(p, p);
    for i in 0..n {
        if !scores.indicator[i] {
            continue;
        }
        let zi: DVector<f64> = sample.z.row(i).transpose();
        let gi: DVector<f64> = scores.g.row(i).transpose();
        for j in 0..n {
            if !scores.indicator[j] {
                continue;
            }
            let zj: DVector<f64> = sample.z.row(j).transpose();
            let gj: DVector<f64> = scores.g.row(j).transpose();
            m += pair_kernel(cfg, &zi, &zj, y[i], y[j], &gi, &gj);
        }
    }
    m /= (n * n) as f64;
    Ok(CandidateMatrix {
        m: symmetrize(&m),
        recipe: cfg.recipe(),
        density: Some(cfg.density),
    })
}
