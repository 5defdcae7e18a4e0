//! Dense linear-algebra helpers shared by the estimators.
//!
//! Everything here works on `nalgebra::DMatrix<f64>` and is deterministic:
//! eigenpairs come back sorted by descending eigenvalue with ties kept in
//! solver index order, and every eigenvector has its largest-magnitude
//! component made positive.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: DMatrix<f64>,
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Sorted symmetric eigen-decomposition. The input is symmetrized first.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> SymEigen {
    let p = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..p).collect();
    // stable sort keeps solver order for exact ties
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(p, p);
    for (k, &i) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        fix_sign(&mut col);
        vectors.set_column(k, &col);
    }
    SymEigen { values, vectors }
}

/// Flip `v` so that its largest-magnitude entry is positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0usize;
    let mut best_abs: f64 = -1.0;
    for (i, x) in v.iter().enumerate() {
        // strict comparison keeps the first index among equal magnitudes
        if x.abs() > best_abs + 1e-12 * best_abs.max(0.0) {
            best_abs = x.abs();
            best = i;
        }
    }
    if v.len() > 0 && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Moore-Penrose pseudo-inverse via SVD; singular values below
/// `rtol * max_sv` are treated as zero.
pub fn pinv(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let smax = svd.singular_values.max();
    let cut = rtol * smax;
    let mut out = DMatrix::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut && s > 0.0 {
            out += vt.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    out
}

/// Pseudo-inverse of a symmetric positive semi-definite matrix through its
/// eigen-decomposition.
pub fn sym_pinv(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let eig = sym_eigen_desc(m);
    let top = eig.values.iter().cloned().fold(0.0_f64, f64::max);
    let p = m.nrows();
    let mut out = DMatrix::zeros(p, p);
    for k in 0..p {
        let lam = eig.values[k];
        if lam > rtol * top && lam > 0.0 {
            let v = eig.vectors.column(k);
            out += v * v.transpose() / lam;
        }
    }
    out
}

/// Orthonormal basis of the column space of `m` (thin QR), with each column
/// sign-fixed. Columns of `m` are assumed linearly independent.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let cols = m.ncols().min(q.ncols());
    q = q.columns(0, cols).into_owned();
    for k in 0..cols {
        let mut c = q.column(k).into_owned();
        fix_sign(&mut c);
        q.set_column(k, &c);
    }
    q
}

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Subtract `mean` from every row.
pub fn center_rows(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut row in out.row_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v -= mean[j];
        }
    }
    out
}

/// Sample covariance with divisor `n - 1`.
pub fn sample_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mean = column_means(x);
    let xc = center_rows(x, &mean);
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    symmetrize(&(xc.transpose() * &xc / denom))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s != 0.0 {
                out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * s));
            }
        }
    }
    out
}

/// Column-major vectorization.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, &b| a.max(b.abs()))
}
