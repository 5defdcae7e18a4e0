//! Iterative Hessian transformation.
//!
//! With `Γ_yz = n⁻¹ Σ y_i z_i` and `Σ_yzz = n⁻¹ Σ y_i z_i z_iᵀ`, the COZY
//! columns `Γ_yz, Σ_yzz Γ_yz, …, Σ_yzz^{p−1} Γ_yz` span a Krylov space inside
//! the central mean subspace. The leading eigenvectors of `Ψ = M Mᵀ` give the
//! estimate.
//!
//! Raw matrix powers overflow or vanish quickly, so each column is stored as
//! a unit direction plus its log-norm. [`CozyScaling::Common`] rescales every
//! column by the same factor before forming `Ψ`, which is `Ψ` itself up to a
//! positive constant. [`CozyScaling::UnitColumns`] normalizes each column
//! separately; that keeps the Krylov span but reweights directions inside
//! it, so the leading eigenvectors can move when the span is larger than `d`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{standardize, CandidateMatrix, Dataset, Recipe, StandardizedSample};
use crate::error::{Result, SdrError};
use crate::linalg::symmetrize;
use crate::subspace::{basis_from_matrix, SubspaceBasis};

pub const ZERO_COZY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CozyScaling {
    #[default]
    Common,
    UnitColumns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct IhtConfig {
    /// Center and scale `y` before the moments (raw `y` by default).
    pub standardize_y: bool,
    pub scaling: CozyScaling,
}

#[derive(Debug, Clone, Serialize)]
pub struct IhtState {
    pub gamma_yz: DVector<f64>,
    pub sigma_yzz: DMatrix<f64>,
    /// Unit-norm COZY directions (a zero column once the sequence dies out).
    pub m: DMatrix<f64>,
    /// `log ‖Σ_yzz^j Γ_yz‖` for each column (`−∞` for zero columns).
    pub log_norms: Vec<f64>,
    pub psi: DMatrix<f64>,
    pub scaling: CozyScaling,
}

impl IhtState {
    /// COZY columns at their true scale. Overflows for large spectra.
    pub fn raw_cozy(&self) -> DMatrix<f64> {
        let mut out = self.m.clone();
        for (j, mut c) in out.column_iter_mut().enumerate() {
            c *= self.log_norms[j].exp();
        }
        out
    }

    /// `max_j ‖Σ_yzz c_j − c_{j+1}‖ / ‖c_{j+1}‖` over the raw columns.
    pub fn recursion_residual(&self) -> f64 {
        let raw = self.raw_cozy();
        let mut worst: f64 = 0.0;
        for j in 0..raw.ncols().saturating_sub(1) {
            let next = raw.column(j + 1);
            let r = (&self.sigma_yzz * raw.column(j) - next).norm();
            let scale = next.norm();
            worst = worst.max(if scale > 0.0 { r / scale } else { r });
        }
        worst
    }

    pub fn candidate(&self) -> CandidateMatrix {
        CandidateMatrix {
            m: self.psi.clone(),
            recipe: Recipe::IhtPsi,
            density: None,
        }
    }
}

/// `(Γ_yz, Σ_yzz)`.
pub fn iht_moments(sample: &StandardizedSample, y: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (n, p) = sample.z.shape();
    let mut gamma = DVector::zeros(p);
    let mut sigma = DMatrix::zeros(p, p);
    for i in 0..n {
        let zi = sample.z.row(i).transpose();
        gamma.axpy(y[i], &zi, 1.0);
        sigma.ger(y[i], &zi, &zi, 1.0);
    }
    (gamma / n as f64, symmetrize(&(sigma / n as f64)))
}

/// Build the COZY sequence and `Ψ`.
pub fn iht_state(sample: &StandardizedSample, y: &DVector<f64>, scaling: CozyScaling) -> Result<IhtState> {
    if y.len() != sample.n() {
        return Err(SdrError::InvalidData("response length does not match the sample".into()));
    }
    let p = sample.p();
    let (gamma, sigma) = iht_moments(sample, y);
    let g0 = gamma.norm();
    if g0 < ZERO_COZY_TOL {
        return Err(SdrError::ZeroCozy { norm: g0 });
    }
    let mut m = DMatrix::zeros(p, p);
    let mut logs = vec![f64::NEG_INFINITY; p];
    m.set_column(0, &(&gamma / g0));
    logs[0] = g0.ln();
    for j in 1..p {
        let next = &sigma * m.column(j - 1);
        let r = next.norm();
        if r == 0.0 || !logs[j - 1].is_finite() {
            break;
        }
        m.set_column(j, &(next / r));
        logs[j] = logs[j - 1] + r.ln();
    }

    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut scaled = m.clone();
    if scaling == CozyScaling::Common {
        for (j, mut c) in scaled.column_iter_mut().enumerate() {
            c *= (logs[j] - top).exp();
        }
    }
    let psi = symmetrize(&(&scaled * scaled.transpose()));
    Ok(IhtState {
        gamma_yz: gamma,
        sigma_yzz: sigma,
        m,
        log_norms: logs,
        psi,
        scaling,
    })
}

/// Leading `d` directions of `Ψ` on an already standardized sample.
pub fn iht_fit(
    sample: &StandardizedSample,
    y: &DVector<f64>,
    d: usize,
    scaling: CozyScaling,
) -> Result<(SubspaceBasis, IhtState)> {
    let p = sample.p();
    if d == 0 || d > p {
        return Err(SdrError::DimensionOutOfRange { d, p });
    }
    let state = iht_state(sample, y, scaling)?;
    let basis = basis_from_matrix(&state.psi, d, &sample.sigma_inv_sqrt)?;
    Ok((basis, state))
}

pub fn iht_estimate(data: &Dataset, d: usize, cfg: &IhtConfig) -> Result<(SubspaceBasis, IhtState)> {
    let sample = standardize(data, cfg.standardize_y)?;
    let y = sample.y_vec();
    iht_fit(&sample, &y, d, cfg.scaling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{column_means, max_abs, orthonormalize};
    use crate::subspace::trace_correlation;
    use proptest::prelude::*;

    fn sample(z: DMatrix<f64>) -> StandardizedSample {
        let (n, p) = z.shape();
        StandardizedSample {
            x_mean: column_means(&z),
            sigma: DMatrix::identity(p, p),
            sigma_inv_sqrt: DMatrix::identity(p, p),
            z,
            y_std: DMatrix::zeros(n, 1),
            y_mean: DVector::zeros(1),
            y_scale: DVector::from_element(1, 1.0),
        }
    }

    #[test]
    fn two_point_moments() {
        let s = sample(DMatrix::from_column_slice(2, 1, &[1.0, -1.0]));
        let (g, m) = iht_moments(&s, &DVector::from_vec(vec![1.0, 1.0]));
        assert_eq!(g[0], 0.0);
        assert!((m[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_response_has_zero_moments_and_errors() {
        let s = sample(DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -1.0, 1.0, 0.0, -1.0]));
        let y = DVector::zeros(3);
        let (g, m) = iht_moments(&s, &y);
        assert_eq!(g.norm(), 0.0);
        assert_eq!(max_abs(&m), 0.0);
        assert!(matches!(iht_state(&s, &y, CozyScaling::Common), Err(SdrError::ZeroCozy { .. })));
    }

    /// `z` rows for which `Σ_yzz` and `Γ_yz` take prescribed values under `y`.
    fn designed(p: usize) -> (StandardizedSample, DVector<f64>) {
        // rows ±e_k with weight k+1: diagonal Σ_yzz and Γ_yz = 0
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        for k in 0..p {
            for s in [1.0, -1.0] {
                let mut r = vec![0.0; p];
                r[k] = s;
                rows.extend(r);
                ys.push((k + 1) as f64);
            }
        }
        let n = ys.len();
        (sample(DMatrix::from_row_slice(n, p, &rows)), DVector::from_vec(ys))
    }

    #[test]
    fn eigenvector_gamma_collapses_to_rank_one() {
        // Σ_yzz diagonal; Γ along e_2 (an eigenvector) after adding one point
        let (mut s, mut y) = designed(3);
        let n = s.n();
        s.z = s.z.insert_row(n, 0.0);
        s.z[(n, 1)] = 1.0;
        y = y.push(0.5);
        let st = iht_state(&s, &y, CozyScaling::Common).unwrap();
        let e = crate::linalg::sym_eigen_desc(&st.psi);
        assert!(e.values[1].abs() < 1e-12 * e.values[0]);
        assert!(st.recursion_residual() < 1e-12);
    }

    #[test]
    fn raw_cozy_follows_recursion() {
        let z = DMatrix::from_row_slice(5, 3, &[
            1.0, 0.2, -0.3, -0.5, 1.0, 0.4, 0.3, -0.8, 1.1, -1.2, 0.1, -0.6, 0.4, -0.5, -0.6,
        ]);
        let y = DVector::from_vec(vec![0.3, 1.2, -0.7, 2.0, 0.1]);
        let st = iht_state(&sample(z), &y, CozyScaling::Common).unwrap();
        let raw = st.raw_cozy();
        assert!((raw.column(0) - &st.gamma_yz).amax() < 1e-15);
        for j in 0..2 {
            let direct = &st.sigma_yzz * raw.column(j);
            assert!((direct - raw.column(j + 1)).norm() <= 1e-12 * raw.column(j + 1).norm());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        // Σ_yzz has an exact two-dimensional invariant subspace containing Γ,
        // so the Krylov space is that plane for either scaling.
        #[test]
        fn krylov_span_and_scaling_agree(
            a in prop::collection::vec(-1.0f64..1.0, 25),
            l in prop::collection::vec(0.2f64..3.0, 5),
            c0 in 0.3f64..2.0,
            c1 in 0.3f64..2.0,
        ) {
            let q = orthonormalize(&(DMatrix::from_column_slice(5, 5, &a) + DMatrix::identity(5, 5) * 3.0));
            prop_assume!(q.ncols() == 5);
            prop_assume!((l[0] - l[1]).abs() > 0.05);
            let sigma = &q * DMatrix::from_diagonal(&DVector::from_vec(l.clone())) * q.transpose();
            let gamma = q.column(0) * c0 + q.column(1) * c1;
            // realize the moments with a sample: rows ±sqrt(n λ_k) q_k and one Γ row
            let (s, y) = realize(&sigma, &gamma);
            let common = iht_fit(&s, &y, 2, CozyScaling::Common);
            let unit = iht_fit(&s, &y, 2, CozyScaling::UnitColumns);
            let (Ok((bc, st)), Ok((bu, _))) = (common, unit) else { return Ok(()); };
            let krylov = q.columns(0, 2).into_owned();
            prop_assert!(trace_correlation(&bc.basis, &krylov, None).unwrap() > 1.0 - 1e-8);
            prop_assert!(trace_correlation(&bc.basis, &bu.basis, None).unwrap() > 1.0 - 1e-6);
            prop_assert!(st.recursion_residual() < 1e-10);
            let e = crate::linalg::sym_eigen_desc(&st.psi);
            prop_assert!(e.values[4] >= -1e-8 * e.values[0]);
        }
    }

    /// Sample `(z_i, y_i)` with `Σ_yzz`, `Γ_yz` equal to the given values.
    fn realize(sigma: &DMatrix<f64>, gamma: &DVector<f64>) -> (StandardizedSample, DVector<f64>) {
        let p = sigma.nrows();
        let e = crate::linalg::sym_eigen_desc(sigma);
        let mut rows: Vec<DVector<f64>> = Vec::new();
        let mut ys = Vec::new();
        // each ±v pair contributes (2/n) y v vᵀ to Σ_yzz and nothing to Γ_yz
        let n = 2 * p + 1;
        for k in 0..p {
            let v = e.vectors.column(k).into_owned();
            for s in [1.0, -1.0] {
                rows.push(&v * s);
                ys.push(e.values[k] * n as f64 / 2.0);
            }
        }
        // one more point at Γ̂ with weight n‖Γ‖ supplies Γ_yz; its Σ_yzz term
        // ‖Γ‖ Γ̂Γ̂ᵀ stays inside the invariant plane
        let gn = gamma.norm();
        rows.push(gamma / gn);
        ys.push(gn * n as f64);
        let z = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        let mut s = sample(z);
        s.y_std = DMatrix::from_column_slice(n, 1, &ys);
        let y = DVector::from_vec(ys);
        (s, y)
    }
}
