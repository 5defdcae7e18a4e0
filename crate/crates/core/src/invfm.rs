//! Inverse regression through the Fourier transform of `E[Z | Y]`.
//!
//! `ψ̂(ω) = n⁻¹ Σ exp(i ωᵀy_j) ẑ_j` is evaluated at `k` frequencies; the real
//! and imaginary parts form the `p × 2k` matrix `Ω̂` and the leading
//! eigenvectors of `V̂ = Ω̂Ω̂ᵀ` span the estimate.
//!
//! Dimension tests look at `Λ̂_m = n Σ_{j>m} λ̂_j`. Two normalizers are
//! available for the scaled and adjusted statistics:
//!
//! * [`TestNormalizer::KernelTrace`] divides by `tr(V̂)`, literally
//!   `T̄ = Λ̂ p*/tr(V̂)` and `T̃ = Λ̂ s*/tr(V̂)` with `s* = tr(V̂)²/tr(V̂²)`.
//! * [`TestNormalizer::NullCovariance`] uses the covariance `W` of the
//!   per-observation contributions to `Q₀ᵀΩ̂P₀`, where `Q₀` and `P₀` span the
//!   trailing left and right singular spaces. Under `rank(Ω) = m`,
//!   `Λ̂_m → Σ w_i χ²₁` with `w = eig(W)`, so `T̄ = Λ̂ p*/tr(W)` and
//!   `T̃ = Λ̂ s*/tr(W)` with `s* = tr(W)²/tr(W²)`.
//!
//! The weighted test compares `Λ̂_m` with Monte Carlo draws of `Σ w_i χ²₁`
//! (trailing eigenvalues of `V̂` as weights under `KernelTrace`).

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::{center_only, standardize, CandidateMatrix, Dataset, Recipe, StandardizedSample};
use crate::error::{Result, SdrError};
use crate::linalg::{sym_eigen_desc, symmetrize};
use crate::subspace::{basis_from_matrix, SubspaceBasis};

/// `tr(V̂)` below this counts as a degenerate kernel.
pub const DEGENERATE_TRACE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierDesign {
    /// `q × k`, one frequency per column.
    pub w: DMatrix<f64>,
    pub seed: Option<u64>,
    pub sd: f64,
}

impl FourierDesign {
    /// IID `N(0, sd²)` frequencies.
    pub fn random(q: usize, k: usize, sd: f64, seed: u64) -> Result<Self> {
        if k == 0 || q == 0 {
            return Err(SdrError::InvalidConfig("need at least one frequency".into()));
        }
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(SdrError::InvalidConfig(format!("frequency sd must be positive, got {sd}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = DMatrix::zeros(q, k);
        // column-major fill: frequency r is drawn before frequency r+1
        for r in 0..k {
            for c in 0..q {
                let e: f64 = StandardNormal.sample(&mut rng);
                w[(c, r)] = sd * e;
            }
        }
        Ok(Self { w, seed: Some(seed), sd })
    }

    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self> {
        if w.ncols() == 0 || w.iter().any(|v| !v.is_finite()) {
            return Err(SdrError::InvalidConfig("frequency matrix must be finite with k ≥ 1".into()));
        }
        Ok(Self { w, seed: None, sd: f64::NAN })
    }

    pub fn k(&self) -> usize {
        self.w.ncols()
    }

    pub fn q(&self) -> usize {
        self.w.nrows()
    }
}

/// `n × 2k` matrix of `(cos ω_rᵀy_j, sin ω_rᵀy_j)` pairs.
pub fn fourier_features(y: &DMatrix<f64>, design: &FourierDesign) -> DMatrix<f64> {
    let n = y.nrows();
    let k = design.k();
    let phase = y * &design.w;
    let mut f = DMatrix::zeros(n, 2 * k);
    for j in 0..n {
        for r in 0..k {
            let t = phase[(j, r)];
            f[(j, 2 * r)] = t.cos();
            f[(j, 2 * r + 1)] = t.sin();
        }
    }
    f
}

/// `ψ̂(ω)` as `(real part, imaginary part)`.
pub fn psi_hat(z: &DMatrix<f64>, y: &DMatrix<f64>, w: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let (n, p) = z.shape();
    let mut re = DVector::zeros(p);
    let mut im = DVector::zeros(p);
    for j in 0..n {
        let t = y.row(j).transpose().dot(w);
        let zj = z.row(j).transpose();
        re.axpy(t.cos(), &zj, 1.0);
        im.axpy(t.sin(), &zj, 1.0);
    }
    (re / n as f64, im / n as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct InvfmKernel {
    /// `p × 2k`: `(â(ω₁), b̂(ω₁), …, â(ω_k), b̂(ω_k))`.
    pub omega: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub trace_v: f64,
    pub n: usize,
    #[serde(skip)]
    pub z: DMatrix<f64>,
    /// Centered Fourier features, `n × 2k`.
    #[serde(skip)]
    pub features: DMatrix<f64>,
}

impl InvfmKernel {
    pub fn from_sample(z: &DMatrix<f64>, y: &DMatrix<f64>, design: &FourierDesign) -> Result<Self> {
        if y.ncols() != design.q() {
            return Err(SdrError::InvalidConfig(format!(
                "frequencies have {} components but the response has {}",
                design.q(),
                y.ncols()
            )));
        }
        let n = z.nrows();
        let k = design.k();
        let cols: Vec<(DVector<f64>, DVector<f64>)> = (0..k)
            .into_par_iter()
            .map(|r| psi_hat(z, y, &design.w.column(r).into_owned()))
            .collect();
        let p = z.ncols();
        let mut omega = DMatrix::zeros(p, 2 * k);
        for (r, (a, b)) in cols.into_iter().enumerate() {
            omega.set_column(2 * r, &a);
            omega.set_column(2 * r + 1, &b);
        }
        let v = symmetrize(&(&omega * omega.transpose()));
        let mut features = fourier_features(y, design);
        let means = crate::linalg::column_means(&features);
        features = crate::linalg::center_rows(&features, &means);
        Ok(Self {
            trace_v: v.trace(),
            omega,
            v,
            n,
            z: z.clone(),
            features,
        })
    }

    pub fn p(&self) -> usize {
        self.omega.nrows()
    }

    pub fn k(&self) -> usize {
        self.omega.ncols() / 2
    }

    pub fn is_degenerate(&self) -> bool {
        self.trace_v < DEGENERATE_TRACE
    }

    pub fn candidate(&self) -> CandidateMatrix {
        CandidateMatrix {
            m: self.v.clone(),
            recipe: Recipe::InvfmV,
            density: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvfmOptions {
    /// Whiten the predictors; otherwise only center them.
    pub scale_x: bool,
    /// Center and scale each response column before the transform.
    pub standardize_y: bool,
}

impl Default for InvfmOptions {
    fn default() -> Self {
        Self {
            scale_x: true,
            standardize_y: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InvfmFit {
    pub basis: SubspaceBasis,
    pub kernel: InvfmKernel,
    pub warnings: Vec<String>,
}

pub fn prepare_sample(data: &Dataset, opts: &InvfmOptions) -> Result<StandardizedSample> {
    if opts.scale_x {
        standardize(data, opts.standardize_y)
    } else {
        Ok(center_only(data, opts.standardize_y))
    }
}

pub fn invfm_estimate(
    data: &Dataset,
    d: usize,
    design: &FourierDesign,
    opts: &InvfmOptions,
) -> Result<InvfmFit> {
    let p = data.p();
    if d == 0 || d > p {
        return Err(SdrError::DimensionOutOfRange { d, p });
    }
    let sample = prepare_sample(data, opts)?;
    let kernel = InvfmKernel::from_sample(&sample.z, &sample.y_std, design)?;
    let mut warnings = Vec::new();
    if kernel.is_degenerate() {
        warnings.push(format!(
            "DegenerateKernel: trace of the kernel matrix is {:e}; directions are arbitrary",
            kernel.trace_v
        ));
    }
    let basis = basis_from_matrix(&kernel.v, d, &sample.sigma_inv_sqrt)?;
    Ok(InvfmFit {
        basis,
        kernel,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TestNormalizer {
    #[default]
    KernelTrace,
    NullCovariance,
}

impl std::str::FromStr for TestNormalizer {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "kernel_trace" | "trace" => Ok(Self::KernelTrace),
            "null_covariance" | "null" => Ok(Self::NullCovariance),
            other => Err(format!("unknown normalizer '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Weighted,
    #[default]
    Scaled,
    Adjusted,
}

impl std::str::FromStr for TestKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "weighted" => Ok(Self::Weighted),
            "scaled" => Ok(Self::Scaled),
            "adjusted" => Ok(Self::Adjusted),
            other => Err(format!("unknown test '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOptions {
    pub normalizer: TestNormalizer,
    /// Monte Carlo draws for the weighted statistic.
    pub draws: usize,
    pub seed: u64,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self {
            normalizer: TestNormalizer::KernelTrace,
            draws: 100_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestTriple {
    pub weighted: f64,
    pub scaled: f64,
    pub adjusted: f64,
}

impl TestTriple {
    pub fn get(&self, kind: TestKind) -> f64 {
        match kind {
            TestKind::Weighted => self.weighted,
            TestKind::Scaled => self.scaled,
            TestKind::Adjusted => self.adjusted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionTestReport {
    pub m: usize,
    pub n: usize,
    pub normalizer: TestNormalizer,
    /// `Λ̂_m = n Σ_{j>m} λ̂_j`.
    pub lambda: f64,
    pub stats: TestTriple,
    pub pvalues: TestTriple,
    pub p_star: usize,
    pub s_star: f64,
    /// Weights used by the weighted test.
    pub weights: Vec<f64>,
}

fn chi2_sf(x: f64, dof: f64) -> f64 {
    if !(x > 0.0) {
        return 1.0;
    }
    if !(dof > 0.0) {
        return 0.0;
    }
    let c = ChiSquared::new(dof).expect("positive dof");
    c.sf(x).clamp(0.0, 1.0)
}

/// Monte Carlo `P(Σ w_i χ²₁ ≥ stat)`.
pub fn weighted_chisq_pvalue(stat: f64, weights: &[f64], draws: usize, seed: u64) -> f64 {
    if !(stat > 0.0) {
        return 1.0;
    }
    let w: Vec<f64> = weights.iter().map(|v| v.max(0.0)).collect();
    if w.iter().all(|&v| v == 0.0) || draws == 0 {
        return 0.0;
    }
    const CHUNKS: usize = 64;
    let per = draws.div_ceil(CHUNKS);
    let hits: usize = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let todo = per.min(draws.saturating_sub(c * per));
            let mut h = 0;
            for _ in 0..todo {
                let mut s = 0.0;
                for &wi in &w {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    s += wi * e * e;
                }
                if s >= stat {
                    h += 1;
                }
            }
            h
        })
        .sum();
    hits as f64 / draws as f64
}

/// Eigenvalues of the covariance of `vec(Q₀ᵀ z_j f̃_jᵀ P₀)`.
pub fn null_weights(kernel: &InvfmKernel, m: usize) -> Vec<f64> {
    let p = kernel.p();
    let k2 = kernel.omega.ncols();
    let left = sym_eigen_desc(&kernel.v);
    let q0 = left.vectors.columns(m, p - m).into_owned();
    let right = sym_eigen_desc(&(kernel.omega.transpose() * &kernel.omega));
    let p0 = right.vectors.columns(m, k2 - m).into_owned();

    let a = &kernel.z * &q0;
    let b = &kernel.features * &p0;
    let n = a.nrows();
    let dim = a.ncols() * b.ncols();
    let mut zeta = DMatrix::zeros(n, dim);
    let la = a.ncols();
    for j in 0..n {
        // vec(a_j b_jᵀ), column-major
        for c in 0..b.ncols() {
            for r in 0..la {
                zeta[(j, c * la + r)] = a[(j, r)] * b[(j, c)];
            }
        }
    }
    let means = crate::linalg::column_means(&zeta);
    let zc = crate::linalg::center_rows(&zeta, &means);
    // nonzero spectrum of zcᵀzc/n via the smaller Gram matrix
    let gram = if dim <= n {
        zc.transpose() * &zc / n as f64
    } else {
        &zc * zc.transpose() / n as f64
    };
    let mut w: Vec<f64> = sym_eigen_desc(&gram).values.iter().map(|v| v.max(0.0)).collect();
    w.truncate(dim);
    w
}

/// Weighted, scaled and adjusted tests of `rank(V) = m`.
pub fn dimension_tests(kernel: &InvfmKernel, m: usize, opts: &TestOptions) -> Result<DimensionTestReport> {
    let p = kernel.p();
    let k = kernel.k();
    if m >= p || m >= 2 * k {
        return Err(SdrError::InvalidM { m, p, k });
    }
    let n = kernel.n;
    let p_star = (p - m) * (2 * k - m);
    let eig = sym_eigen_desc(&kernel.v);
    let tail: Vec<f64> = eig.values.iter().skip(m).map(|v| v.max(0.0)).collect();
    let lambda = n as f64 * tail.iter().sum::<f64>();

    let (weights, tr, tr2) = match opts.normalizer {
        TestNormalizer::KernelTrace => {
            let tr = kernel.trace_v;
            let tr2 = (&kernel.v * &kernel.v).trace();
            (tail.clone(), tr, tr2)
        }
        TestNormalizer::NullCovariance => {
            let w = null_weights(kernel, m);
            let tr: f64 = w.iter().sum();
            let tr2: f64 = w.iter().map(|v| v * v).sum();
            (w, tr, tr2)
        }
    };
    let s_star = if tr2 > 0.0 { tr * tr / tr2 } else { 0.0 };
    let (scaled, adjusted) = if tr > 0.0 {
        (lambda * p_star as f64 / tr, lambda * s_star / tr)
    } else {
        (0.0, 0.0)
    };
    let pvalues = TestTriple {
        weighted: weighted_chisq_pvalue(lambda, &weights, opts.draws, opts.seed),
        scaled: if tr > 0.0 { chi2_sf(scaled, p_star as f64) } else { 1.0 },
        adjusted: if tr > 0.0 { chi2_sf(adjusted, s_star) } else { 1.0 },
    };
    Ok(DimensionTestReport {
        m,
        n,
        normalizer: opts.normalizer,
        lambda,
        stats: TestTriple {
            weighted: lambda,
            scaled,
            adjusted,
        },
        pvalues,
        p_star,
        s_star,
        weights,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SequentialTest {
    pub reports: Vec<DimensionTestReport>,
    /// First `m` not rejected (or the largest testable `m + 1` if all reject).
    pub chosen: usize,
    pub level: f64,
    pub test: TestKind,
}

/// Test `m = 0, 1, …` until the chosen test fails to reject at `level`.
pub fn sequential_test(
    kernel: &InvfmKernel,
    level: f64,
    test: TestKind,
    opts: &TestOptions,
) -> Result<SequentialTest> {
    let max_m = kernel.p().min(2 * kernel.k());
    let mut reports = Vec::new();
    let mut chosen = max_m;
    for m in 0..max_m {
        let r = dimension_tests(kernel, m, opts)?;
        let accept = r.pvalues.get(test) >= level;
        reports.push(r);
        if accept {
            chosen = m;
            break;
        }
    }
    Ok(SequentialTest {
        reports,
        chosen,
        level,
        test,
    })
}
