//! Minimum-discrepancy estimation on Fourier inverse-regression moments.
//!
//! `ξ̂` stacks `Σ̂⁻¹ n⁻¹ Σ_j e^{iω_rᵀy_j}(x_j − x̄)` for `r = 1..k` as real and
//! imaginary column pairs (`p × 2k`). For an inner-product matrix `V` the
//! discrepancy
//!
//! ```text
//! F(Γ, C) = (vec ξ̂ − vec ΓC)ᵀ V (vec ξ̂ − vec ΓC)
//! ```
//!
//! is minimized over orthonormal `Γ` (`p × d`) and `C` (`d × 2k`) by
//! alternating a weighted least-squares update of `C` with column-by-column
//! updates of `Γ`. The five inner products differ only in `V`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, StandardizedSample};
use crate::error::{Result, SdrError};
use crate::invfm::{fourier_features, invfm_estimate, prepare_sample, FourierDesign, InvfmKernel, InvfmOptions};
use crate::linalg::{center_rows, column_means, orthonormalize, pinv, sym_eigen_desc, symmetrize};
use crate::subspace::SubspaceBasis;

/// Relative eigenvalue floor below which an inner-product block is ridged.
pub const SINGULAR_TOL: f64 = 1e-10;
pub const RIDGE_DELTA: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct XiEstimate {
    /// `p × 2k`, columns `(ξ₁ᴿ, ξ₁ᴵ, …, ξ_kᴿ, ξ_kᴵ)`.
    pub xi: DMatrix<f64>,
    /// `n × 2k` regression residuals `ε̂`.
    pub residuals: DMatrix<f64>,
    /// `n × 2k` centered transforms `ε̃ = e^{iωᵀy} − mean`.
    pub centered: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub sigma_inv_sqrt: DMatrix<f64>,
    #[serde(skip)]
    pub z: DMatrix<f64>,
    pub design: FourierDesign,
}

impl XiEstimate {
    pub fn p(&self) -> usize {
        self.xi.nrows()
    }

    pub fn k(&self) -> usize {
        self.xi.ncols() / 2
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }
}

/// `ξ̂` and residuals. With `scale_x` off the predictors are only centered and
/// `Σ̂` is taken as the identity.
pub fn xi_hat(data: &Dataset, design: &FourierDesign, opts: &InvfmOptions) -> Result<XiEstimate> {
    let sample = prepare_sample(data, opts)?;
    Ok(xi_from_sample(&sample, design, opts.scale_x)?)
}

pub fn xi_from_sample(sample: &StandardizedSample, design: &FourierDesign, scaled: bool) -> Result<XiEstimate> {
    let p = sample.p();
    let kernel = InvfmKernel::from_sample(&sample.z, &sample.y_std, design)?;
    let xi = &sample.sigma_inv_sqrt * &kernel.omega;
    let f = fourier_features(&sample.y_std, design);
    let centered = center_rows(&f, &column_means(&f));
    let residuals = &centered - &sample.z * &kernel.omega;
    Ok(XiEstimate {
        xi,
        residuals,
        centered,
        sigma: if scaled { sample.sigma.clone() } else { DMatrix::identity(p, p) },
        sigma_inv_sqrt: sample.sigma_inv_sqrt.clone(),
        z: sample.z.clone(),
        design: design.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InnerProductKind {
    #[serde(rename = "FT-IRE")]
    Ire,
    #[serde(rename = "FT-DIRE")]
    Dire,
    #[serde(rename = "FT-SIRE")]
    Sire,
    #[serde(rename = "FT-RIRE")]
    Rire,
    #[serde(rename = "FT-DRIRE")]
    Drire,
}

impl std::str::FromStr for InnerProductKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let t = s.to_ascii_uppercase();
        match t.trim_start_matches("FT-") {
            "IRE" => Ok(Self::Ire),
            "DIRE" => Ok(Self::Dire),
            "SIRE" => Ok(Self::Sire),
            "RIRE" => Ok(Self::Rire),
            "DRIRE" => Ok(Self::Drire),
            _ => Err(format!("unknown estimator '{s}'")),
        }
    }
}

/// Block-diagonal inner-product matrix. Block `l` covers frequencies
/// `offsets[l] .. offsets[l] + sizes[l]`, i.e. `2 p sizes[l]` rows of `vec ξ`.
#[derive(Debug, Clone, Serialize)]
pub struct InnerProduct {
    pub kind: InnerProductKind,
    pub sizes: Vec<usize>,
    pub blocks: Vec<DMatrix<f64>>,
    pub ridge_applied: bool,
}

impl InnerProduct {
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.nrows()).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let mut at = 0;
        for b in &self.blocks {
            let s = b.nrows();
            out.view_mut((at, at), (s, s)).copy_from(b);
            at += s;
        }
        out
    }

    fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.sizes
            .iter()
            .map(|&s| {
                let o = acc;
                acc += s;
                o
            })
            .collect()
    }
}

/// Per-observation `vec(Σ̂^{-1/2} z_j e_jᵀ)` restricted to frequency columns
/// `[c0, c1)`; returns its covariance (divisor n).
fn influence_covariance(xi: &XiEstimate, e: &DMatrix<f64>, c0: usize, c1: usize) -> DMatrix<f64> {
    let n = xi.n();
    let p = xi.p();
    let a = &xi.z * &xi.sigma_inv_sqrt; // rows (Σ̂^{-1/2} z_j)ᵀ
    let w = c1 - c0;
    let mut rows = DMatrix::zeros(n, p * w);
    for j in 0..n {
        for c in 0..w {
            let ec = e[(j, c0 + c)];
            for r in 0..p {
                rows[(j, c * p + r)] = a[(j, r)] * ec;
            }
        }
    }
    let rc = center_rows(&rows, &column_means(&rows));
    symmetrize(&(rc.transpose() * &rc / n as f64))
}

/// `S⁻¹`, or `(S + δ tr(S)/dim I)⁻¹` when `S` is numerically singular.
fn inverse_or_ridge(s: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let dim = s.nrows();
    let eig = sym_eigen_desc(s);
    let top = eig.values[0];
    let low = eig.values[dim - 1];
    let (vals, ridged) = if top > 0.0 && low > SINGULAR_TOL * top {
        (eig.values.clone(), false)
    } else {
        let bump = RIDGE_DELTA * s.trace().max(f64::MIN_POSITIVE) / dim as f64;
        (eig.values.map(|v| v + bump), true)
    };
    let inv = DVector::from_iterator(dim, vals.iter().map(|v| 1.0 / v.max(f64::MIN_POSITIVE)));
    let out = &eig.vectors * DMatrix::from_diagonal(&inv) * eig.vectors.transpose();
    (symmetrize(&out), ridged)
}

/// Inner product for `kind`. `blocks` gives frequency group sizes for the
/// degenerate kinds (default: one group per frequency).
pub fn build_inner_product(
    xi: &XiEstimate,
    kind: InnerProductKind,
    blocks: Option<&[usize]>,
) -> Result<InnerProduct> {
    let k = xi.k();
    let p = xi.p();
    let sizes: Vec<usize> = match kind {
        InnerProductKind::Ire | InnerProductKind::Rire => vec![k],
        InnerProductKind::Sire => vec![1; k],
        InnerProductKind::Dire | InnerProductKind::Drire => match blocks {
            Some(b) => b.to_vec(),
            None => vec![1; k],
        },
    };
    if sizes.iter().sum::<usize>() != k || sizes.iter().any(|&s| s == 0) {
        return Err(SdrError::InvalidConfig(format!(
            "frequency blocks {sizes:?} must be positive and sum to k = {k}"
        )));
    }
    let mut out = Vec::with_capacity(sizes.len());
    let mut ridge = false;
    let mut at = 0;
    for &s in &sizes {
        let block = match kind {
            InnerProductKind::Sire => {
                let mut b = DMatrix::zeros(2 * p, 2 * p);
                b.view_mut((0, 0), (p, p)).copy_from(&xi.sigma);
                b.view_mut((p, p), (p, p)).copy_from(&xi.sigma);
                b
            }
            InnerProductKind::Ire | InnerProductKind::Dire => {
                let (inv, r) = inverse_or_ridge(&influence_covariance(xi, &xi.residuals, 2 * at, 2 * (at + s)));
                ridge |= r;
                inv
            }
            InnerProductKind::Rire | InnerProductKind::Drire => {
                let (inv, r) = inverse_or_ridge(&influence_covariance(xi, &xi.centered, 2 * at, 2 * (at + s)));
                ridge |= r;
                inv
            }
        };
        out.push(block);
        at += s;
    }
    Ok(InnerProduct {
        kind,
        sizes,
        blocks: out,
        ridge_applied: ridge,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct QdfSolution {
    pub gamma: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub objective: f64,
    /// Objective after each full sweep, starting with the initial point.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest `‖ΓᵀΓ − I‖_∞` seen over all iterates.
    pub max_orthogonality_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QdfOptions {
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for QdfOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 500,
            tol: 1e-6,
        }
    }
}

/// Columns `[2 off, 2 (off + s))` of `m`, vectorized.
fn block_vec(m: &DMatrix<f64>, off: usize, s: usize) -> DVector<f64> {
    let part = m.columns(2 * off, 2 * s).into_owned();
    DVector::from_column_slice(part.as_slice())
}

/// `F(Γ, C)` for block-diagonal `V`.
pub fn qdf_objective(xi: &DMatrix<f64>, v: &InnerProduct, gamma: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    let r = xi - gamma * c;
    let mut total = 0.0;
    for ((off, &s), b) in v.offsets().into_iter().zip(&v.sizes).zip(&v.blocks) {
        let e = block_vec(&r, off, s);
        total += e.dot(&(b * &e));
    }
    total
}

/// `I_m ⊗ Γ`.
fn kron_identity(m: usize, g: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, d) = g.shape();
    let mut out = DMatrix::zeros(m * p, m * d);
    for i in 0..m {
        out.view_mut((i * p, i * d), (p, d)).copy_from(g);
    }
    out
}

/// Weighted least-squares `C` given `Γ`, solved block by block.
pub fn update_c(xi: &DMatrix<f64>, v: &InnerProduct, gamma: &DMatrix<f64>) -> DMatrix<f64> {
    let d = gamma.ncols();
    let mut c = DMatrix::zeros(d, xi.ncols());
    for ((off, &s), b) in v.offsets().into_iter().zip(&v.sizes).zip(&v.blocks) {
        let h = kron_identity(2 * s, gamma);
        let hv = h.transpose() * b;
        let lhs = &hv * &h;
        let rhs = &hv * block_vec(xi, off, s);
        let sol = pinv(&lhs, 1e-12) * rhs;
        let cb = DMatrix::from_column_slice(d, 2 * s, sol.as_slice());
        c.columns_mut(2 * off, 2 * s).copy_from(&cb);
    }
    c
}

/// Minimize over column `k` of `Γ` with the others and `C` fixed; returns the
/// new unit column, or `None` when the update vanishes.
fn update_column(
    xi: &DMatrix<f64>,
    v: &InnerProduct,
    gamma: &DMatrix<f64>,
    c: &DMatrix<f64>,
    k: usize,
) -> Option<DVector<f64>> {
    let (p, d) = gamma.shape();
    let mut others = gamma.clone();
    others.set_column(k, &DVector::zeros(p));
    let q = DMatrix::identity(p, p) - &others * others.transpose();
    // α_k = ξ − Σ_{j≠k} γ_j c_jᵀ
    let alpha = xi - &others * c;
    let ck = c.row(k).transpose();
    let mut lhs = DMatrix::zeros(p, p);
    let mut rhs = DVector::zeros(p);
    for ((off, &s), b) in v.offsets().into_iter().zip(&v.sizes).zip(&v.blocks) {
        // G = c_kᵀ ⊗ I_p restricted to this block: (2 s p) × p
        let mut g = DMatrix::zeros(2 * s * p, p);
        for t in 0..2 * s {
            let w = ck[2 * off + t];
            for r in 0..p {
                g[(t * p + r, r)] = w;
            }
        }
        let gv = g.transpose() * b;
        lhs += &gv * &g;
        rhs += &gv * block_vec(&alpha, off, s);
    }
    // minimize over b = N u with N an orthonormal basis of the complement
    let basis = sym_eigen_desc(&q).vectors.columns(0, p + 1 - d).into_owned();
    let reduced = symmetrize(&(basis.transpose() * &lhs * &basis));
    let r = basis.transpose() * rhs;
    let u = match reduced.clone().cholesky() {
        Some(ch) => ch.solve(&r),
        None => pinv(&reduced, 1e-12) * r,
    };
    let b_hat = basis * u;
    let norm = b_hat.norm();
    if !(norm > 1e-300) || d == 0 {
        return None;
    }
    let mut col = b_hat / norm;
    if col.dot(&gamma.column(k)) < 0.0 {
        col.neg_mut();
    }
    Some(col)
}

fn orth_error(g: &DMatrix<f64>) -> f64 {
    let d = g.ncols();
    crate::linalg::max_abs(&(g.transpose() * g - DMatrix::identity(d, d)))
}

/// Alternating minimization of the discrepancy from `init` (orthonormalized).
pub fn minimize_qdf(
    xi: &XiEstimate,
    v: &InnerProduct,
    d: usize,
    init: Option<&DMatrix<f64>>,
    opts: &QdfOptions,
) -> Result<QdfSolution> {
    let p = xi.p();
    if d == 0 || d > p {
        return Err(SdrError::DimensionOutOfRange { d, p });
    }
    if v.dim() != 2 * xi.k() * p {
        return Err(SdrError::InvalidConfig("inner product does not match ξ̂".into()));
    }
    let mut gamma = match init {
        Some(g) => {
            if g.shape() != (p, d) {
                return Err(SdrError::InvalidConfig(format!("initial Γ must be {p} × {d}")));
            }
            orthonormalize(g)
        }
        None => DMatrix::identity(p, d),
    };
    if gamma.ncols() != d || orth_error(&gamma) > 1e-8 {
        return Err(SdrError::RankDeficientBasis { smallest: 0.0 });
    }
    let x = &xi.xi;
    let mut c = update_c(x, v, &gamma);
    let mut trace = vec![qdf_objective(x, v, &gamma, &c)];
    let mut worst_orth = orth_error(&gamma);
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let (g_old, c_old) = (gamma.clone(), c.clone());
        let mut current = *trace.last().unwrap();
        for k in 0..d {
            if let Some(col) = update_column(x, v, &gamma, &c, k) {
                let mut cand = gamma.clone();
                cand.set_column(k, &col);
                let c_new = update_c(x, v, &cand);
                let f = qdf_objective(x, v, &cand, &c_new);
                // an ill-conditioned V can make the closed-form step worse than staying put
                if f <= current {
                    gamma = cand;
                    c = c_new;
                    current = f;
                }
            }
            worst_orth = worst_orth.max(orth_error(&gamma));
        }
        trace.push(current);
        let dg = (&gamma - g_old).norm_squared();
        let dc = (&c - c_old).norm_squared();
        if dg.max(dc) < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(QdfSolution {
        objective: *trace.last().unwrap(),
        gamma,
        c,
        objective_trace: trace,
        iterations: sweeps,
        converged,
        max_orthogonality_error: worst_orth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QdfInit {
    /// Orthonormalized inverse Fourier basis.
    #[default]
    Invfm,
    /// First `d` coordinate vectors.
    Unit,
}

#[derive(Debug, Clone, Serialize)]
pub struct XireFit {
    pub basis: SubspaceBasis,
    pub solution: QdfSolution,
    pub kind: InnerProductKind,
    pub ridge_applied: bool,
    pub design: FourierDesign,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XireConfig {
    pub kind: InnerProductKind,
    pub blocks: Option<Vec<usize>>,
    pub init: QdfInit,
    pub invfm: InvfmOptions,
    pub qdf: QdfOptions,
}

impl Default for XireConfig {
    fn default() -> Self {
        Self {
            kind: InnerProductKind::Ire,
            blocks: None,
            init: QdfInit::Invfm,
            invfm: InvfmOptions::default(),
            qdf: QdfOptions::default(),
        }
    }
}

/// `ξ̂` → inner product → alternating minimization, all on one design.
pub fn xire_with_design(data: &Dataset, d: usize, design: &FourierDesign, cfg: &XireConfig) -> Result<XireFit> {
    let xi = xi_hat(data, design, &cfg.invfm)?;
    let v = build_inner_product(&xi, cfg.kind, cfg.blocks.as_deref())?;
    let mut warnings = Vec::new();
    let init = match cfg.init {
        QdfInit::Invfm => {
            let fit = invfm_estimate(data, d, design, &cfg.invfm)?;
            warnings.extend(fit.warnings);
            fit.basis.basis
        }
        QdfInit::Unit => DMatrix::identity(xi.p(), d),
    };
    let solution = minimize_qdf(&xi, &v, d, Some(&init), &cfg.qdf)?;
    if v.ridge_applied {
        warnings.push("SingularInnerProduct: ridge regularization applied".into());
    }
    if !solution.converged {
        warnings.push(format!("NonConvergence: stopped after {} sweeps", solution.iterations));
    }
    let p = xi.p();
    let sqrt_sigma = if cfg.invfm.scale_x {
        crate::data::inverse_sqrt(&xi.sigma)?.try_inverse().unwrap_or(DMatrix::identity(p, p))
    } else {
        DMatrix::identity(p, p)
    };
    let whitened = orthonormalize(&(sqrt_sigma * &solution.gamma));
    let basis = SubspaceBasis {
        basis: solution.gamma.clone(),
        whitened,
        eigvals: DVector::zeros(0),
        full_spectrum: DVector::zeros(0),
    };
    Ok(XireFit {
        basis,
        ridge_applied: v.ridge_applied,
        solution,
        kind: cfg.kind,
        design: design.clone(),
        warnings,
    })
}

/// Generate `m` frequencies from `seed` and fit.
pub fn fm_xire(data: &Dataset, d: usize, m: usize, seed: u64, cfg: &XireConfig) -> Result<XireFit> {
    let design = FourierDesign::random(data.q(), m, 1.0, seed)?;
    xire_with_design(data, d, &design, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron, max_abs, vec_of};
    use crate::synth::{generate, Model, SynthSpec};
    use proptest::prelude::*;

    fn toy(n: usize, p: usize, k: usize, seed: u64) -> XiEstimate {
        let s = generate(&SynthSpec::new(n, p, Model::DoubleIndex, seed)).unwrap();
        let design = FourierDesign::random(1, k, 1.0, seed).unwrap();
        xi_hat(&s.data, &design, &InvfmOptions::default()).unwrap()
    }

    #[test]
    fn zero_frequency_xi_vanishes() {
        let s = generate(&SynthSpec::new(30, 3, Model::Linear, 4)).unwrap();
        let design = FourierDesign::from_matrix(DMatrix::zeros(1, 1)).unwrap();
        let xi = xi_hat(&s.data, &design, &InvfmOptions::default()).unwrap();
        assert!(xi.xi.amax() < 1e-15);
    }

    #[test]
    fn two_point_xi() {
        // p=1, x = (1, −1), y = (0, π), ω = 1, raw y
        let data = Dataset::from_xy(
            DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![0.0, std::f64::consts::PI]),
        )
        .unwrap();
        let design = FourierDesign::from_matrix(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let opts = InvfmOptions { scale_x: true, standardize_y: false };
        let xi = xi_hat(&data, &design, &opts).unwrap();
        // Σ̂ = 2; n⁻¹Σ e^{iy}(x − x̄) = (1·1 + (−1)(−1))/2 = 1 real, ~0 imaginary
        assert!((xi.xi[(0, 0)] - 0.5).abs() < 1e-15);
        assert!(xi.xi[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn xi_matches_complex_loop() {
        let s = generate(&SynthSpec::new(25, 3, Model::CubicSingleIndex, 8)).unwrap();
        let design = FourierDesign::random(1, 3, 1.0, 2).unwrap();
        let opts = InvfmOptions { scale_x: true, standardize_y: false };
        let xi = xi_hat(&s.data, &design, &opts).unwrap();
        let x = &s.data.x;
        let n = 25.0;
        let xbar = column_means(x);
        let sinv = crate::linalg::sample_covariance(x).try_inverse().unwrap();
        for r in 0..3 {
            let w = design.w[(0, r)];
            let (mut re, mut im) = (DVector::zeros(3), DVector::zeros(3));
            let (mut er, mut ei) = (0.0, 0.0);
            for j in 0..25 {
                let t = w * s.data.y[(j, 0)];
                re += x.row(j).transpose() * t.cos() / n;
                im += x.row(j).transpose() * t.sin() / n;
                er += t.cos() / n;
                ei += t.sin() / n;
            }
            let a = &sinv * (re - &xbar * er);
            let b = &sinv * (im - &xbar * ei);
            assert!((xi.xi.column(2 * r) - a).amax() < 1e-12);
            assert!((xi.xi.column(2 * r + 1) - b).amax() < 1e-12);
        }
        assert!(column_means(&xi.residuals).amax() < 1e-8);
    }

    #[test]
    fn sire_is_block_sigma() {
        let xi = toy(60, 3, 2, 1);
        let v = build_inner_product(&xi, InnerProductKind::Sire, None).unwrap();
        let dense = v.to_dense();
        let expect = kron(&DMatrix::identity(4, 4), &xi.sigma);
        assert!(max_abs(&(dense - expect)) == 0.0);
        // objective unfolds to Σ_l (ξ_l − ΓC_l)ᵀ Σ̂ (ξ_l − ΓC_l)
        let g = orthonormalize(&DMatrix::from_fn(3, 1, |i, _| 1.0 + i as f64));
        let c = update_c(&xi.xi, &v, &g);
        let r = &xi.xi - &g * &c;
        let direct: f64 = r.column_iter().map(|col| col.dot(&(&xi.sigma * col))).sum();
        assert!((qdf_objective(&xi.xi, &v, &g, &c) - direct).abs() < 1e-12);
    }

    #[test]
    fn single_block_dire_equals_ire() {
        let xi = toy(80, 3, 2, 2);
        let a = build_inner_product(&xi, InnerProductKind::Ire, None).unwrap();
        let b = build_inner_product(&xi, InnerProductKind::Dire, Some(&[2])).unwrap();
        assert!(max_abs(&(a.to_dense() - b.to_dense())) == 0.0);
        assert!(build_inner_product(&xi, InnerProductKind::Dire, Some(&[1, 2])).is_err());
    }

    #[test]
    fn robust_covariance_matches_kronecker_oracle() {
        let xi = toy(200, 2, 2, 3);
        let v = build_inner_product(&xi, InnerProductKind::Rire, None).unwrap();
        // G̃ = (I ⊗ Σ̂^{-1/2}) cov[vec(z ε̃ᵀ)] (I ⊗ Σ̂^{-1/2})
        let n = 200;
        let vecs: Vec<DVector<f64>> = (0..n)
            .map(|j| {
                let zj = xi.z.row(j).transpose();
                let ej = xi.centered.row(j).transpose();
                vec_of(&(zj * ej.transpose()))
            })
            .collect();
        let mean = vecs.iter().fold(DVector::zeros(8), |a, v| a + v) / n as f64;
        let mut cov = DMatrix::zeros(8, 8);
        for v in &vecs {
            let c = v - &mean;
            cov += &c * c.transpose();
        }
        cov /= n as f64;
        let t = kron(&DMatrix::identity(4, 4), &xi.sigma_inv_sqrt);
        let g = &t * cov * &t;
        let inv = v.to_dense().try_inverse().unwrap();
        assert!(max_abs(&(inv - g)) < 1e-8);
    }

    #[test]
    fn ridge_on_singular_block() {
        // more frequency columns than observations can support
        let s = generate(&SynthSpec::new(6, 3, Model::Linear, 5)).unwrap();
        let design = FourierDesign::random(1, 4, 1.0, 1).unwrap();
        let xi = xi_hat(&s.data, &design, &InvfmOptions::default()).unwrap();
        let v = build_inner_product(&xi, InnerProductKind::Ire, None).unwrap();
        assert!(v.ridge_applied);
        assert!(v.to_dense().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn zero_residual_fixed_point() {
        let xi0 = toy(50, 4, 3, 6);
        let g0 = orthonormalize(&DMatrix::from_fn(4, 2, |i, j| ((i + 2 * j) as f64).sin() + 0.5));
        let c0 = DMatrix::from_fn(2, 6, |i, j| (i as f64 + 1.0) * (j as f64 - 2.5));
        let mut xi = xi0.clone();
        xi.xi = &g0 * &c0;
        let v = build_inner_product(&xi, InnerProductKind::Sire, None).unwrap();
        let sol = minimize_qdf(&xi, &v, 2, Some(&g0), &QdfOptions::default()).unwrap();
        assert!(sol.objective < 1e-20);
        assert!(sol.converged);
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn full_dimension_reaches_zero() {
        let xi = toy(80, 3, 2, 7);
        let v = build_inner_product(&xi, InnerProductKind::Ire, None).unwrap();
        let sol = minimize_qdf(&xi, &v, 3, None, &QdfOptions::default()).unwrap();
        assert!(sol.objective < 1e-18);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn descent_orthonormality_and_rotation(seed in 0u64..1000, d in 1usize..3, kind in 0usize..5) {
            let kinds = [InnerProductKind::Ire, InnerProductKind::Dire, InnerProductKind::Sire, InnerProductKind::Rire, InnerProductKind::Drire];
            let xi = toy(120, 4, 3, seed);
            let v = build_inner_product(&xi, kinds[kind], None).unwrap();
            let sol = minimize_qdf(&xi, &v, d, None, &QdfOptions::default()).unwrap();
            for w in sol.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-10 * w[0].abs().max(1.0), "{:?}", sol.objective_trace);
            }
            prop_assert!(sol.max_orthogonality_error < 1e-8);
            prop_assert!(sol.objective >= 0.0);
            // (ΓR, RᵀC) leaves F unchanged
            let r = orthonormalize(&DMatrix::from_fn(d, d, |i, j| (1.0 + i as f64 * 0.7 + j as f64 * 1.3).cos()));
            let f0 = qdf_objective(&xi.xi, &v, &sol.gamma, &sol.c);
            let f1 = qdf_objective(&xi.xi, &v, &(&sol.gamma * &r), &(r.transpose() * &sol.c));
            prop_assert!((f0 - f1).abs() < 1e-10 * f0.max(1.0));
        }
    }
}
