//! Leading eigenvectors of a candidate matrix, mapped back to predictor
//! scale, and the trace-correlation distance between two subspaces.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::CandidateMatrix;
use crate::error::{Result, SdrError};
use crate::linalg::{pinv, sym_eigen_desc};

/// Singular values below this fraction of the largest make a basis rank deficient.
pub const BASIS_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct SubspaceBasis {
    /// `p × d`, columns in original predictor scale (not normalized).
    pub basis: DMatrix<f64>,
    /// `p × d` orthonormal directions in whitened coordinates.
    pub whitened: DMatrix<f64>,
    /// Leading `d` eigenvalues (empty for estimators without a spectrum).
    pub eigvals: DVector<f64>,
    pub full_spectrum: DVector<f64>,
}

impl SubspaceBasis {
    pub fn d(&self) -> usize {
        self.basis.ncols()
    }

    pub fn p(&self) -> usize {
        self.basis.nrows()
    }

    /// Basis from orthonormal whitened directions without an associated spectrum.
    pub fn from_whitened(whitened: DMatrix<f64>, sigma_inv_sqrt: &DMatrix<f64>) -> Self {
        Self {
            basis: sigma_inv_sqrt * &whitened,
            whitened,
            eigvals: DVector::zeros(0),
            full_spectrum: DVector::zeros(0),
        }
    }
}

/// Top-`d` eigenvectors of `M`, back-transformed as `Σ̂^{-1/2} ê_k`.
pub fn extract_basis(
    cand: &CandidateMatrix,
    d: usize,
    sigma_inv_sqrt: &DMatrix<f64>,
) -> Result<SubspaceBasis> {
    basis_from_matrix(&cand.m, d, sigma_inv_sqrt)
}

pub fn basis_from_matrix(
    m: &DMatrix<f64>,
    d: usize,
    sigma_inv_sqrt: &DMatrix<f64>,
) -> Result<SubspaceBasis> {
    let p = m.nrows();
    if d == 0 || d > p {
        return Err(SdrError::DimensionOutOfRange { d, p });
    }
    let eig = sym_eigen_desc(m);
    let whitened = eig.vectors.columns(0, d).into_owned();
    Ok(SubspaceBasis {
        basis: sigma_inv_sqrt * &whitened,
        whitened,
        eigvals: eig.values.rows(0, d).into_owned(),
        full_spectrum: eig.values,
    })
}

/// Orthogonal projector onto the column space of `a`.
pub fn projector(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if !(smax > 0.0) || smin < BASIS_RANK_TOL * smax {
        return Err(SdrError::RankDeficientBasis { smallest: smin });
    }
    let gram = a.transpose() * a;
    Ok(a * pinv(&gram, 1e-14) * a.transpose())
}

/// `γ = sqrt(tr(P_A P_B) / d)` clamped to `[0, 1]`; `d` defaults to the larger
/// of the two dimensions.
pub fn trace_correlation(a: &DMatrix<f64>, b: &DMatrix<f64>, d: Option<usize>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(SdrError::InvalidData(format!(
            "bases live in different spaces ({} vs {} rows)",
            a.nrows(),
            b.nrows()
        )));
    }
    let d = d.unwrap_or(a.ncols().max(b.ncols()));
    if d == 0 {
        return Err(SdrError::DimensionOutOfRange { d, p: a.nrows() });
    }
    let pa = projector(a)?;
    let pb = projector(b)?;
    let tr = (pa.component_mul(&pb)).sum();
    Ok((tr / d as f64).max(0.0).sqrt().min(1.0))
}

/// `1 − γ`.
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>, d: Option<usize>) -> Result<f64> {
    Ok(1.0 - trace_correlation(a, b, d)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Recipe;
    use crate::linalg::max_abs;
    use proptest::prelude::*;

    fn e(p: usize, i: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(p, 1);
        m[(i, 0)] = 1.0;
        m
    }

    fn cand(m: DMatrix<f64>) -> CandidateMatrix {
        CandidateMatrix { m, recipe: Recipe::Fmm, density: None }
    }

    #[test]
    fn diagonal_spectrum() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let b = extract_basis(&cand(m), 2, &DMatrix::identity(3, 3)).unwrap();
        assert_eq!(b.eigvals.as_slice(), &[3.0, 2.0]);
        assert!((b.basis.column(0) - e(3, 0).column(0)).amax() < 1e-12);
        assert!((b.basis.column(1) - e(3, 1).column(0)).amax() < 1e-12);
    }

    #[test]
    fn identity_matrix_any_direction() {
        let m = DMatrix::identity(4, 4);
        let b = extract_basis(&cand(m.clone()), 1, &DMatrix::identity(4, 4)).unwrap();
        assert!((b.eigvals[0] - 1.0).abs() < 1e-12);
        let ev = &b.whitened;
        assert!(max_abs(&(&m * ev - ev * b.eigvals[0])) < 1e-12);
    }

    #[test]
    fn dimension_out_of_range() {
        let m = cand(DMatrix::identity(2, 2));
        assert!(matches!(extract_basis(&m, 0, &DMatrix::identity(2, 2)), Err(SdrError::DimensionOutOfRange { .. })));
        assert!(matches!(extract_basis(&m, 3, &DMatrix::identity(2, 2)), Err(SdrError::DimensionOutOfRange { .. })));
    }

    #[test]
    fn trace_correlation_examples() {
        assert!((trace_correlation(&e(3, 0), &e(3, 0), None).unwrap() - 1.0).abs() < 1e-12);
        assert!(trace_correlation(&e(3, 0), &e(3, 1), None).unwrap().abs() < 1e-12);
        let diag = (e(3, 0) + e(3, 1)) / 2f64.sqrt();
        let g = trace_correlation(&e(3, 0), &diag, Some(1)).unwrap();
        // tr(P_A P_B) = (e1ᵀb)² = 1/2
        assert!((g - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((subspace_distance(&e(3, 0), &e(3, 1), None).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_basis_rejected() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 0.0, 1.0, 2.0]);
        assert!(matches!(trace_correlation(&a, &a, None), Err(SdrError::RankDeficientBasis { .. })));
    }

    fn spd(vals: &[f64], p: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(p, p, |i, j| vals[(i * p + j) % vals.len()]);
        &a * a.transpose() + DMatrix::identity(p, p) * 1e-3
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn invariant_subspace_residual(vals in prop::collection::vec(-2.0f64..2.0, 25), d in 1usize..5) {
            let m = spd(&vals, 5);
            let b = basis_from_matrix(&m, d, &DMatrix::identity(5, 5)).unwrap();
            let norm = m.clone().svd(false, false).singular_values.max();
            let r = &m * &b.whitened - &b.whitened * DMatrix::from_diagonal(&b.eigvals);
            for k in 0..d {
                prop_assert!(r.column(k).norm() <= 1e-8 * norm.max(1.0));
            }
            prop_assert!(max_abs(&(b.whitened.transpose() * &b.whitened - DMatrix::identity(d, d))) < 1e-8);
            for k in 1..d {
                prop_assert!(b.eigvals[k - 1] >= b.eigvals[k]);
            }
        }

        #[test]
        fn trace_correlation_span_invariant(
            a in prop::collection::vec(-2.0f64..2.0, 12),
            b in prop::collection::vec(-2.0f64..2.0, 12),
            r in prop::collection::vec(-2.0f64..2.0, 4),
        ) {
            let a = DMatrix::from_column_slice(6, 2, &a);
            let b = DMatrix::from_column_slice(6, 2, &b);
            let r = DMatrix::from_column_slice(2, 2, &r);
            prop_assume!(r.determinant().abs() > 0.1);
            let (Ok(g), Ok(g_self)) = (trace_correlation(&a, &b, None), trace_correlation(&a, &a, None)) else {
                return Ok(());
            };
            prop_assert!((0.0..=1.0).contains(&g));
            prop_assert!((g_self - 1.0).abs() < 1e-10);
            let g_rot = trace_correlation(&(&a * &r), &b, None).unwrap();
            prop_assert!((g - g_rot).abs() < 1e-10);
        }
    }
}
