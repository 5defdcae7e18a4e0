//! Dataset representation and predictor whitening.
//!
//! A [`Dataset`] pairs an `n × p` predictor matrix with an `n × q` response
//! matrix. [`standardize`] produces the whitened sample every estimator in
//! the crate starts from: `z_i = Σ̂^{-1/2}(x_i − x̄)` with the symmetric
//! inverse square root of the sample covariance (divisor `n − 1`).

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Result, SdrError};
use crate::linalg::{center_rows, column_means, sample_covariance, sym_eigen_desc};

/// Eigenvalues below `RANK_TOL * λ_max` mark a covariance as singular.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub x_names: Vec<String>,
    pub y_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        let x_names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        let y_names = (1..=y.ncols()).map(|j| format!("y{j}")).collect();
        Self::with_names(x, y, x_names, y_names)
    }

    pub fn with_names(
        x: DMatrix<f64>,
        y: DMatrix<f64>,
        x_names: Vec<String>,
        y_names: Vec<String>,
    ) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(SdrError::InvalidData(format!(
                "predictor rows ({}) and response rows ({}) differ",
                x.nrows(),
                y.nrows()
            )));
        }
        if x.nrows() < 2 {
            return Err(SdrError::InvalidData(format!(
                "need at least 2 observations, got {}",
                x.nrows()
            )));
        }
        if x.ncols() == 0 || y.ncols() == 0 {
            return Err(SdrError::InvalidData(
                "predictor and response matrices need at least one column".into(),
            ));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(SdrError::InvalidData("non-finite entry".into()));
        }
        if x_names.len() != x.ncols() || y_names.len() != y.ncols() {
            return Err(SdrError::InvalidData("column name count mismatch".into()));
        }
        Ok(Self {
            x,
            y,
            x_names,
            y_names,
        })
    }

    /// Univariate-response convenience constructor.
    pub fn from_xy(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let n = y.len();
        Self::new(x, DMatrix::from_column_slice(n, 1, y.as_slice()))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.y.ncols()
    }

    /// First response column.
    pub fn y_vec(&self) -> DVector<f64> {
        self.y.column(0).into_owned()
    }

    /// Rows picked by `idx` (with repetition), as used by the bootstrap.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
            x_names: self.x_names.clone(),
            y_names: self.y_names.clone(),
        }
    }
}

/// Whitened predictors plus everything needed to map back to the original scale.
#[derive(Debug, Clone)]
pub struct StandardizedSample {
    pub z: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub sigma_inv_sqrt: DMatrix<f64>,
    pub x_mean: DVector<f64>,
    /// Responses after optional centering/scaling (raw when not standardized).
    pub y_std: DMatrix<f64>,
    pub y_mean: DVector<f64>,
    pub y_scale: DVector<f64>,
}

impl StandardizedSample {
    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    pub fn y_vec(&self) -> DVector<f64> {
        self.y_std.column(0).into_owned()
    }
}

/// Symmetric inverse square root `V diag(λ^{-1/2}) Vᵀ`.
pub fn inverse_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !s.is_square() {
        return Err(SdrError::InvalidData("inverse_sqrt needs a square matrix".into()));
    }
    let eig = sym_eigen_desc(s);
    let p = s.nrows();
    if p == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let top = eig.values[0];
    let low = eig.values[p - 1];
    let tol = RANK_TOL * top.abs().max(f64::MIN_POSITIVE);
    if top <= 0.0 || low < tol {
        return Err(SdrError::SingularCovariance {
            eigenvalue: low,
            tolerance: tol,
        });
    }
    let scale = DVector::from_iterator(p, eig.values.iter().map(|l| 1.0 / l.sqrt()));
    let v = &eig.vectors;
    let out = v * DMatrix::from_diagonal(&scale) * v.transpose();
    Ok(crate::linalg::symmetrize(&out))
}

/// Center and whiten the predictors; optionally standardize each response
/// column to zero mean and unit sample standard deviation.
///
/// A constant response column is centered only (its scale is left at 1).
pub fn standardize(data: &Dataset, standardize_y: bool) -> Result<StandardizedSample> {
    let x_mean = column_means(&data.x);
    let sigma = sample_covariance(&data.x);
    let sigma_inv_sqrt = inverse_sqrt(&sigma)?;
    let z = center_rows(&data.x, &x_mean) * &sigma_inv_sqrt;
    let (y_std, y_mean, y_scale) = responses(data, standardize_y);
    Ok(StandardizedSample {
        z,
        sigma,
        sigma_inv_sqrt,
        x_mean,
        y_std,
        y_mean,
        y_scale,
    })
}

/// Center the predictors without rescaling; `sigma_inv_sqrt` is the identity.
/// Works for singular covariances.
pub fn center_only(data: &Dataset, standardize_y: bool) -> StandardizedSample {
    let p = data.p();
    let x_mean = column_means(&data.x);
    let z = center_rows(&data.x, &x_mean);
    let (y_std, y_mean, y_scale) = responses(data, standardize_y);
    StandardizedSample {
        z,
        sigma: sample_covariance(&data.x),
        sigma_inv_sqrt: DMatrix::identity(p, p),
        x_mean,
        y_std,
        y_mean,
        y_scale,
    }
}

fn responses(data: &Dataset, standardize_y: bool) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let q = data.q();
    if !standardize_y {
        return (data.y.clone(), DVector::zeros(q), DVector::from_element(q, 1.0));
    }
    let y_mean = column_means(&data.y);
    let mut y_std = center_rows(&data.y, &y_mean);
    let n1 = (data.n() - 1) as f64;
    let y_scale = DVector::from_iterator(
        q,
        y_std.column_iter().map(|c| {
            let sd = (c.norm_squared() / n1).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        }),
    );
    for (j, mut col) in y_std.column_iter_mut().enumerate() {
        col /= y_scale[j];
    }
    (y_std, y_mean, y_scale)
}

/// How a candidate matrix was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Recipe {
    #[serde(rename = "FMM")]
    Fmm,
    #[serde(rename = "FMC")]
    Fmc,
    #[serde(rename = "CMM")]
    Cmm,
    #[serde(rename = "CMC")]
    Cmc,
    #[serde(rename = "IHT_PSI")]
    IhtPsi,
    #[serde(rename = "INVFM_V")]
    InvfmV,
}

/// Symmetric nonnegative-definite `p × p` matrix whose column space estimates
/// the target subspace (in whitened coordinates).
#[derive(Debug, Clone, Serialize)]
pub struct CandidateMatrix {
    pub m: DMatrix<f64>,
    pub recipe: Recipe,
    pub density: Option<crate::density::DensityAssumption>,
}

impl CandidateMatrix {
    pub fn p(&self) -> usize {
        self.m.nrows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use proptest::prelude::*;

    fn spd(p: usize, seed: u64) -> DMatrix<f64> {
        // deterministic well-conditioned SPD matrix
        let a = DMatrix::from_fn(p, p, |i, j| {
            let t = (seed as f64 + 1.0) * (i as f64 * 1.7 + j as f64 * 0.3 + 0.1);
            t.sin()
        });
        &a * a.transpose() + DMatrix::identity(p, p) * 0.5
    }

    #[test]
    fn two_point_standardization() {
        let d = Dataset::from_xy(
            DMatrix::from_column_slice(2, 1, &[2.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        )
        .unwrap();
        let s = standardize(&d, true).unwrap();
        assert!((s.x_mean[0] - 1.0).abs() < 1e-15);
        assert!((s.sigma[(0, 0)] - 2.0).abs() < 1e-15);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.z[(0, 0)] - r).abs() < 1e-15);
        assert!((s.z[(1, 0)] + r).abs() < 1e-15);
    }

    #[test]
    fn identical_columns_are_singular() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0, 5.0, 5.0]);
        let d = Dataset::from_xy(x, DVector::from_element(4, 1.0)).unwrap();
        assert!(matches!(standardize(&d, false), Err(SdrError::SingularCovariance { .. })));
    }

    #[test]
    fn inverse_sqrt_diagonal() {
        let r = inverse_sqrt(&DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]))).unwrap();
        assert!(max_abs(&(r - DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0])))) < 1e-15);
        let i = inverse_sqrt(&DMatrix::identity(3, 3)).unwrap();
        assert!(max_abs(&(i - DMatrix::identity(3, 3))) < 1e-15);
    }

    #[test]
    fn inverse_sqrt_matches_cholesky_solve() {
        let s = spd(5, 3);
        let r = inverse_sqrt(&s).unwrap();
        assert!(max_abs(&(&r * &s * &r - DMatrix::identity(5, 5))) < 1e-8);
        // R² = S⁻¹ from an independent factorization
        let inv = s.clone().cholesky().unwrap().inverse();
        assert!(max_abs(&(&r * &r - inv)) < 1e-8);
        assert!(max_abs(&(&r - r.transpose())) == 0.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        let x = DMatrix::zeros(3, 2);
        assert!(Dataset::new(x.clone(), DMatrix::zeros(2, 1)).is_err());
        assert!(Dataset::new(DMatrix::zeros(1, 2), DMatrix::zeros(1, 1)).is_err());
        let mut bad = x;
        bad[(0, 0)] = f64::NAN;
        assert!(Dataset::new(bad, DMatrix::zeros(3, 1)).is_err());
    }

    fn sample_x(n: usize, p: usize, vals: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |i, j| vals[(i * p + j) % vals.len()] + (i * j) as f64 * 0.01)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn whitened_sample_has_identity_covariance(vals in prop::collection::vec(-3.0f64..3.0, 60..120)) {
            let x = sample_x(20, 3, &vals);
            let d = Dataset::from_xy(x, DVector::from_element(20, 1.0)).unwrap();
            if let Ok(s) = standardize(&d, false) {
                let c = sample_covariance(&s.z);
                prop_assert!(max_abs(&(c - DMatrix::identity(3, 3))) < 1e-8);
                prop_assert!(column_means(&s.z).amax() < 1e-10);
                // idempotence
                let again = standardize(&Dataset::from_xy(s.z.clone(), DVector::from_element(20, 1.0)).unwrap(), false).unwrap();
                prop_assert!(max_abs(&(again.z - &s.z)) < 1e-8);
            }
        }

        #[test]
        fn diagonal_rescaling_changes_z_by_rotation(
            vals in prop::collection::vec(-3.0f64..3.0, 60..120),
            scales in prop::collection::vec(0.2f64..5.0, 3),
        ) {
            let x = sample_x(20, 3, &vals);
            let dx = &x * DMatrix::from_diagonal(&DVector::from_vec(scales));
            let y = DVector::from_element(20, 1.0);
            let (a, b) = match (
                standardize(&Dataset::from_xy(x, y.clone()).unwrap(), false),
                standardize(&Dataset::from_xy(dx, y).unwrap(), false),
            ) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return Ok(()),
            };
            // Z_b = Z_a Q with Q orthogonal, so the Gram matrices agree
            let ga = &a.z * a.z.transpose();
            let gb = &b.z * b.z.transpose();
            prop_assert!(max_abs(&(ga - gb)) < 1e-6);
        }
    }
}
