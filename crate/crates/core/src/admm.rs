//! Sparse Fourier inverse regression by iterated ADMM.
//!
//! Minimizes
//!
//! ```text
//! L(Γ, C) = ½‖Σ̂^{1/2}ξ̂ − Σ̂^{1/2}ΓC‖²_F + λ Σ_j w_j ‖Γ_j·‖₂,   CCᵀ = I_d
//! ```
//!
//! using only `Σ̂` and `Ξ̂ = Σ̂ξ̂ = n⁻¹ Σ_j (x_j − x̄) f_jᵀ`, so `p > n` is fine.
//! The constant `½ tr(ξ̂ᵀΣ̂ξ̂)` is dropped from every reported objective since it
//! needs `Σ̂⁻¹`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{center_only, Dataset};
use crate::error::{Result, SdrError};
use crate::invfm::{fourier_features, FourierDesign};
use crate::linalg::{column_means, center_rows, sym_eigen_desc};

/// Weight given to rows that were exactly zero at reweighting.
pub const WEIGHT_CAP: f64 = 1e8;
/// ADMM steps allowed per unit of `no_b`.
pub const ADMM_STEPS_PER_B: usize = 100;
pub const RANK_COLLAPSE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub rho: f64,
    pub eps: f64,
    pub no_b: usize,
    pub no_c: usize,
    /// Total weight passes: the first uses equal weights, each later one
    /// reweights from the previous solution.
    pub no_w: usize,
    pub sparse_cov: bool,
    pub scale_x: bool,
    pub standardize_y: bool,
    /// Initial weights; `None` means all ones.
    pub weights: Option<Vec<f64>>,
    pub seed: u64,
    pub cv_folds: usize,
    pub cv_grid: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            eps: 1e-6,
            no_b: 5,
            no_c: 20,
            no_w: 2,
            sparse_cov: false,
            scale_x: false,
            standardize_y: true,
            weights: None,
            seed: 1,
            cv_folds: 5,
            cv_grid: 20,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(SdrError::InvalidConfig(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.eps > 0.0) {
            return Err(SdrError::InvalidConfig("eps must be positive".into()));
        }
        if self.no_b == 0 || self.no_c == 0 || self.no_w == 0 {
            return Err(SdrError::InvalidConfig("iteration caps must be at least 1".into()));
        }
        if self.cv_folds < 2 || self.cv_grid == 0 {
            return Err(SdrError::InvalidConfig("cross-validation needs ≥ 2 folds and a nonempty grid".into()));
        }
        if let Some(w) = &self.weights {
            if w.len() != p || w.iter().any(|v| !(*v >= 0.0)) {
                return Err(SdrError::InvalidConfig(format!("weights must be {p} nonnegative values")));
            }
        }
        Ok(())
    }
}

/// `Σ̂`, `Ξ̂` and the cached `(Σ̂ + ρI)⁻¹`.
#[derive(Debug, Clone)]
pub struct SparseProblem {
    pub sigma: DMatrix<f64>,
    pub xi: DMatrix<f64>,
    pub ridge_inverse: DMatrix<f64>,
    pub rho: f64,
}

impl SparseProblem {
    pub fn new(sigma: DMatrix<f64>, xi: DMatrix<f64>, rho: f64) -> Result<Self> {
        let p = sigma.nrows();
        let shifted = &sigma + DMatrix::identity(p, p) * rho;
        let ridge_inverse = match shifted.clone().cholesky() {
            Some(ch) => ch.inverse(),
            None => shifted.try_inverse().ok_or_else(|| {
                SdrError::InvalidConfig("Σ̂ + ρI is singular; increase rho".into())
            })?,
        };
        Ok(Self { sigma, xi, ridge_inverse, rho })
    }

    pub fn p(&self) -> usize {
        self.sigma.nrows()
    }

    /// `½ tr(CᵀΓᵀΣ̂ΓC) − tr(Ξ̂ᵀΓC)`.
    pub fn loss(&self, gamma: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
        let gc = gamma * c;
        0.5 * (gc.transpose() * &self.sigma * &gc).trace() - self.xi.component_mul(&gc).sum()
    }

    pub fn objective(&self, gamma: &DMatrix<f64>, c: &DMatrix<f64>, lambda: f64, w: &[f64]) -> f64 {
        self.loss(gamma, c) + lambda * penalty(gamma, w)
    }
}

pub fn penalty(gamma: &DMatrix<f64>, w: &[f64]) -> f64 {
    gamma.row_iter().zip(w).map(|(r, wj)| if *wj > 0.0 { wj * r.norm() } else { 0.0 }).sum()
}

/// `max{1 − t/‖v‖, 0} v`.
pub fn row_soft_threshold(v: &DVector<f64>, t: f64) -> DVector<f64> {
    let norm = v.norm();
    if t == 0.0 {
        return v.clone();
    }
    if norm <= t {
        return DVector::zeros(v.len());
    }
    v * (1.0 - t / norm)
}

#[derive(Debug, Clone)]
pub struct AdmmState {
    pub a: DMatrix<f64>,
    pub u: DMatrix<f64>,
}

impl AdmmState {
    pub fn from_gamma(gamma: &DMatrix<f64>) -> Self {
        Self {
            a: gamma.clone(),
            u: DMatrix::zeros(gamma.nrows(), gamma.ncols()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GammaUpdate {
    pub gamma: DMatrix<f64>,
    pub state: AdmmState,
    pub steps: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// ADMM for `Γ` given `C`, warm-started from `state`.
pub fn admm_gamma_update(
    prob: &SparseProblem,
    c: &DMatrix<f64>,
    lambda: f64,
    w: &[f64],
    state: AdmmState,
    max_steps: usize,
    eps: f64,
) -> GammaUpdate {
    let rho = prob.rho;
    let xc = &prob.xi * c.transpose();
    let AdmmState { mut a, mut u } = state;
    let mut gamma = a.clone();
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);
    let mut steps = 0;
    while steps < max_steps {
        steps += 1;
        gamma = &prob.ridge_inverse * (&xc + (&a - &u) * rho);
        let v = &gamma + &u;
        let mut a_new = DMatrix::zeros(v.nrows(), v.ncols());
        for j in 0..v.nrows() {
            let row = v.row(j).transpose();
            let shrunk = row_soft_threshold(&row, lambda * w[j] / rho);
            a_new.set_row(j, &shrunk.transpose());
        }
        u += &gamma - &a_new;
        primal = (&gamma - &a_new).norm();
        dual = ((&a - &a_new) * rho).norm();
        a = a_new;
        if primal < eps && dual < eps {
            break;
        }
    }
    GammaUpdate {
        gamma,
        converged: primal < eps && dual < eps,
        state: AdmmState { a, u },
        steps,
        primal_residual: primal,
        dual_residual: dual,
    }
}

/// Orthonormal-row `C` maximizing `tr(Ξ̂ᵀΓC)`; the flag reports a collapsed
/// singular value.
pub fn admm_c_update(xi: &DMatrix<f64>, gamma: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let d = gamma.ncols();
    let k2 = xi.ncols();
    let m = xi.transpose() * gamma; // 2k × d
    let svd = m.svd(true, true);
    let mut w1 = svd.u.expect("svd u"); // 2k × d
    let w2t = svd.v_t.expect("svd v_t"); // d × d
    let smax = svd.singular_values.max();
    let collapsed: Vec<usize> = (0..d)
        .filter(|&i| !(svd.singular_values[i] > RANK_COLLAPSE_TOL * smax.max(1.0)))
        .collect();
    if !collapsed.is_empty() {
        // complete the left factor on the collapsed directions
        let good: Vec<usize> = (0..d).filter(|i| !collapsed.contains(i)).collect();
        let mut taken = DMatrix::zeros(k2, good.len());
        for (t, &i) in good.iter().enumerate() {
            taken.set_column(t, &w1.column(i));
        }
        let proj = DMatrix::identity(k2, k2) - &taken * taken.transpose();
        let comp = sym_eigen_desc(&crate::linalg::symmetrize(&proj)).vectors;
        for (t, &i) in collapsed.iter().enumerate() {
            w1.set_column(i, &comp.column(t));
        }
    }
    (w2t.transpose() * w1.transpose(), !collapsed.is_empty())
}

/// Entrywise soft threshold of the off-diagonal correlations at
/// `√(log p / n)`, mapped back to the covariance scale.
pub fn soft_threshold_covariance(sigma: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let p = sigma.nrows();
    let t = ((p as f64).ln().max(0.0) / n as f64).sqrt();
    let sd: Vec<f64> = (0..p).map(|i| sigma[(i, i)].max(0.0).sqrt()).collect();
    DMatrix::from_fn(p, p, |i, j| {
        let s = sigma[(i, j)];
        if i == j || sd[i] == 0.0 || sd[j] == 0.0 {
            return s;
        }
        let r = s / (sd[i] * sd[j]);
        r.signum() * (r.abs() - t).max(0.0) * sd[i] * sd[j]
    })
}

/// `(Σ̂, Ξ̂)` for `data` under the scaling flags.
pub fn sparse_moments(data: &Dataset, design: &FourierDesign, cfg: &AdmmConfig) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut x = data.x.clone();
    let n = data.n();
    if cfg.scale_x {
        let mean = column_means(&x);
        let xc = center_rows(&x, &mean);
        for (j, mut col) in x.column_iter_mut().enumerate() {
            let sd = (xc.column(j).norm_squared() / (n as f64 - 1.0)).sqrt();
            if !(sd > 0.0) {
                return Err(SdrError::InvalidData(format!("predictor {j} is constant")));
            }
            col /= sd;
        }
    }
    let scaled = Dataset { x, ..data.clone() };
    let sample = center_only(&scaled, cfg.standardize_y);
    let f = fourier_features(&sample.y_std, design);
    let xi = sample.z.transpose() * f / n as f64;
    let sigma = if cfg.sparse_cov {
        soft_threshold_covariance(&sample.sigma, n)
    } else {
        sample.sigma
    };
    Ok((sigma, xi))
}

/// Smallest `λ` at which `Γ = 0` is optimal at unit weights for every
/// feasible `C`: the largest row norm of `Ξ̂`.
pub fn lambda_max(xi: &DMatrix<f64>) -> f64 {
    xi.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct SparseSolution {
    #[serde(rename = "Gamma")]
    pub gamma: DMatrix<f64>,
    #[serde(rename = "C")]
    pub c: DMatrix<f64>,
    pub active_set: Vec<usize>,
    /// Penalized objective after each outer iteration, one list per weight pass.
    pub objective_trace: Vec<Vec<f64>>,
    pub lambda: f64,
    pub weights: Vec<f64>,
    pub converged: bool,
    pub rank_collapse: bool,
    pub cv: Option<CvReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub lambdas: Vec<f64>,
    pub scores: Vec<f64>,
    pub folds: usize,
}

fn initial_gamma(xi: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let eig = sym_eigen_desc(&(xi * xi.transpose()));
    eig.vectors.columns(0, d).into_owned()
}

/// Iterated ADMM at a fixed `λ`.
pub fn admm_fixed(prob: &SparseProblem, d: usize, lambda: f64, cfg: &AdmmConfig) -> Result<SparseSolution> {
    let p = prob.p();
    if d == 0 || d > p.min(prob.xi.ncols()) {
        return Err(SdrError::DimensionOutOfRange { d, p });
    }
    if !(lambda >= 0.0) {
        return Err(SdrError::InvalidConfig(format!("lambda must be nonnegative, got {lambda}")));
    }
    cfg.validate(p)?;
    let mut w = cfg.weights.clone().unwrap_or_else(|| vec![1.0; p]);
    let max_steps = cfg.no_b * ADMM_STEPS_PER_B;
    let mut gamma = initial_gamma(&prob.xi, d);
    let (mut c, mut collapse) = admm_c_update(&prob.xi, &gamma);
    let mut state = AdmmState::from_gamma(&gamma);
    let mut traces = Vec::with_capacity(cfg.no_w);
    let mut converged = true;
    for pass in 0..cfg.no_w {
        if pass > 0 {
            for (j, wj) in w.iter_mut().enumerate() {
                let norm = gamma.row(j).norm();
                *wj = if norm > 0.0 { (1.0 / norm.sqrt()).min(WEIGHT_CAP) } else { WEIGHT_CAP };
            }
            state = AdmmState::from_gamma(&gamma);
        }
        let mut trace = Vec::with_capacity(cfg.no_c);
        let mut last = f64::INFINITY;
        for _ in 0..cfg.no_c {
            let (c_new, flag) = admm_c_update(&prob.xi, &gamma);
            collapse |= flag;
            c = c_new;
            let upd = admm_gamma_update(prob, &c, lambda, &w, state, max_steps, cfg.eps);
            converged &= upd.converged;
            // the thresholded copy carries exact zeros
            gamma = upd.state.a.clone();
            state = upd.state;
            let obj = prob.objective(&gamma, &c, lambda, &w);
            trace.push(obj);
            if (obj - last).abs() < cfg.eps {
                break;
            }
            last = obj;
        }
        traces.push(trace);
    }
    let active_set: Vec<usize> = (0..p).filter(|&j| gamma.row(j).iter().any(|v| *v != 0.0)).collect();
    let mut warnings = Vec::new();
    if !converged {
        warnings.push("NonConvergence: ADMM step cap reached".into());
    }
    if collapse {
        warnings.push("RankCollapse: Ξ̂ᵀΓ lost rank; C completed arbitrarily".into());
    }
    Ok(SparseSolution {
        gamma,
        c,
        active_set,
        objective_trace: traces,
        lambda,
        weights: w,
        converged,
        rank_collapse: collapse,
        cv: None,
        warnings,
    })
}

fn fold_of(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut out = vec![0; n];
    for (pos, &i) in idx.iter().enumerate() {
        out[i] = pos % folds;
    }
    out
}

/// Log-spaced grid over `[1e-3, 1]·λ_max`.
pub fn lambda_grid(lmax: f64, len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![lmax];
    }
    (0..len)
        .map(|i| lmax * 10f64.powf(-3.0 + 3.0 * i as f64 / (len - 1) as f64))
        .collect()
}

/// K-fold choice of `λ` by held-out discrepancy with the `Σ̂` inner product.
pub fn cross_validate(data: &Dataset, d: usize, design: &FourierDesign, cfg: &AdmmConfig) -> Result<CvReport> {
    let (sigma, xi) = sparse_moments(data, design, cfg)?;
    let _ = sigma;
    let lambdas = lambda_grid(lambda_max(&xi), cfg.cv_grid);
    let fold = fold_of(data.n(), cfg.cv_folds, cfg.seed);
    let splits: Vec<(SparseProblem, SparseProblem)> = (0..cfg.cv_folds)
        .map(|f| {
            let train: Vec<usize> = (0..data.n()).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..data.n()).filter(|&i| fold[i] == f).collect();
            let (s_tr, x_tr) = sparse_moments(&data.select_rows(&train), design, cfg)?;
            let (s_te, x_te) = sparse_moments(&data.select_rows(&test), design, cfg)?;
            Ok((SparseProblem::new(s_tr, x_tr, cfg.rho)?, SparseProblem::new(s_te, x_te, cfg.rho)?))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..lambdas.len()).flat_map(|l| (0..cfg.cv_folds).map(move |f| (l, f))).collect();
    let losses: Vec<f64> = jobs
        .par_iter()
        .map(|&(l, f)| {
            let (train, test) = &splits[f];
            match admm_fixed(train, d, lambdas[l], cfg) {
                Ok(sol) => test.loss(&sol.gamma, &sol.c),
                Err(_) => f64::INFINITY,
            }
        })
        .collect();
    let scores = (0..lambdas.len())
        .map(|l| losses[l * cfg.cv_folds..(l + 1) * cfg.cv_folds].iter().sum::<f64>() / cfg.cv_folds as f64)
        .collect();
    Ok(CvReport {
        lambdas,
        scores,
        folds: cfg.cv_folds,
    })
}

/// Full sparse fit on `m` random frequencies; `lambda = None` runs
/// cross-validation first.
pub fn admmft(data: &Dataset, d: usize, m: usize, lambda: Option<f64>, cfg: &AdmmConfig) -> Result<SparseSolution> {
    let design = FourierDesign::random(data.q(), m, 1.0, cfg.seed)?;
    admmft_with_design(data, d, &design, lambda, cfg)
}

pub fn admmft_with_design(
    data: &Dataset,
    d: usize,
    design: &FourierDesign,
    lambda: Option<f64>,
    cfg: &AdmmConfig,
) -> Result<SparseSolution> {
    cfg.validate(data.p())?;
    let (cv, lambda) = match lambda {
        Some(l) => (None, l),
        None => {
            let rep = cross_validate(data, d, design, cfg)?;
            let best = rep
                .scores
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc })
                .0;
            let l = rep.lambdas[best];
            (Some(rep), l)
        }
    };
    let (sigma, xi) = sparse_moments(data, design, cfg)?;
    let prob = SparseProblem::new(sigma, xi, cfg.rho)?;
    let mut sol = admm_fixed(&prob, d, lambda, cfg)?;
    sol.cv = cv;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::synth::{generate, Model, SynthSpec};
    use proptest::prelude::*;

    #[test]
    fn soft_threshold_examples() {
        let v = DVector::from_vec(vec![3.0, 4.0]);
        let s = row_soft_threshold(&v, 1.0);
        assert!((s[0] - 2.4).abs() < 1e-15 && (s[1] - 3.2).abs() < 1e-15);
        assert_eq!(row_soft_threshold(&v, 5.0), DVector::zeros(2));
        assert_eq!(row_soft_threshold(&v, 0.0), v);
        assert_eq!(row_soft_threshold(&DVector::zeros(2), 1.0), DVector::zeros(2));
    }

    fn problem(seed: u64, n: usize, p: usize) -> SparseProblem {
        let s = generate(&SynthSpec::new(n, p, Model::DoubleIndex, seed)).unwrap();
        let design = FourierDesign::random(1, 4, 1.0, seed).unwrap();
        let (sigma, xi) = sparse_moments(&s.data, &design, &AdmmConfig::default()).unwrap();
        SparseProblem::new(sigma, xi, 1.0).unwrap()
    }

    #[test]
    fn zero_lambda_solves_normal_equations() {
        let prob = problem(1, 80, 4);
        let c = admm_c_update(&prob.xi, &initial_gamma(&prob.xi, 2)).0;
        let upd = admm_gamma_update(&prob, &c, 0.0, &[1.0; 4], AdmmState::from_gamma(&DMatrix::zeros(4, 2)), 100_000, 1e-12);
        let direct = prob.sigma.clone().try_inverse().unwrap() * &prob.xi * c.transpose();
        assert!(max_abs(&(&upd.gamma - direct)) < 1e-9);
        assert!(max_abs(&(&prob.sigma * &upd.gamma - &prob.xi * c.transpose())) < 1e-9);
    }

    #[test]
    fn huge_lambda_zeroes_everything() {
        let prob = problem(2, 60, 5);
        let cfg = AdmmConfig::default();
        let sol = admm_fixed(&prob, 1, 1.01 * lambda_max(&prob.xi), &cfg).unwrap();
        assert!(sol.active_set.is_empty());
        assert!(sol.gamma.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_problem_matches_grid_search() {
        // p = d = 1, 2k = 2: minimize ½σγ² − γ b + λ|γ| with b = Ξ̂Cᵀ
        let sigma = DMatrix::from_element(1, 1, 0.7);
        let xi = DMatrix::from_row_slice(1, 2, &[0.3, -0.4]);
        let prob = SparseProblem::new(sigma, xi.clone(), 1.0).unwrap();
        let c = admm_c_update(&xi, &DMatrix::from_element(1, 1, 1.0)).0;
        let b = (&xi * c.transpose())[(0, 0)];
        let lambda = 0.2;
        let upd = admm_gamma_update(&prob, &c, lambda, &[1.0], AdmmState::from_gamma(&DMatrix::zeros(1, 1)), 100_000, 1e-13);
        let (mut best, mut arg) = (f64::INFINITY, 0.0);
        for i in 0..=2_000_000 {
            let g = -2.0 + 4.0 * i as f64 / 2e6;
            let f = 0.5 * 0.7 * g * g - g * b + lambda * g.abs();
            if f < best {
                best = f;
                arg = g;
            }
        }
        assert!((upd.gamma[(0, 0)] - arg).abs() < 1e-5);
        assert!((upd.state.a[(0, 0)] - (b.abs() - lambda) / 0.7 * b.signum()).abs() < 1e-8);
    }

    #[test]
    fn c_update_closed_forms() {
        let xi = DMatrix::from_row_slice(3, 4, &[1.0, 2.0, 0.0, -1.0, 0.5, 0.0, 1.0, 1.0, -2.0, 0.3, 0.1, 0.0]);
        let g = DMatrix::from_column_slice(3, 1, &[0.2, -0.7, 1.1]);
        let (c, flag) = admm_c_update(&xi, &g);
        assert!(!flag);
        let expect = (g.transpose() * &xi) / (g.transpose() * &xi).norm();
        assert!(max_abs(&(c - expect)) < 1e-12);
        let (c0, flag0) = admm_c_update(&xi, &DMatrix::zeros(3, 2));
        assert!(flag0);
        assert!(max_abs(&(&c0 * c0.transpose() - DMatrix::identity(2, 2))) < 1e-10);
    }

    #[test]
    fn zero_rows_stay_zero_after_reweighting() {
        let prob = problem(3, 100, 6);
        let cfg = AdmmConfig { no_w: 3, ..Default::default() };
        let sol = admm_fixed(&prob, 1, 0.3 * lambda_max(&prob.xi), &cfg).unwrap();
        for j in 0..6 {
            if sol.weights[j] == WEIGHT_CAP {
                assert!(sol.gamma.row(j).iter().all(|v| *v == 0.0));
            }
        }
        for j in 0..6 {
            if !sol.active_set.contains(&j) {
                assert!(sol.gamma.row(j).iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn sparse_covariance_keeps_diagonal() {
        let s = DMatrix::from_row_slice(2, 2, &[4.0, 0.1, 0.1, 1.0]);
        let t = soft_threshold_covariance(&s, 10);
        assert_eq!(t[(0, 0)], 4.0);
        assert_eq!(t[(1, 1)], 1.0);
        // |r| = 0.05 < √(ln 2 / 10)
        assert_eq!(t[(0, 1)], 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn polar_factor_is_orthonormal(vals in prop::collection::vec(-3.0f64..3.0, 24), g in prop::collection::vec(-3.0f64..3.0, 8)) {
            let xi = DMatrix::from_column_slice(4, 6, &vals);
            let gamma = DMatrix::from_column_slice(4, 2, &g);
            let (c, _) = admm_c_update(&xi, &gamma);
            prop_assert!(max_abs(&(&c * c.transpose() - DMatrix::identity(2, 2))) < 1e-10);
        }

        #[test]
        fn penalized_objective_descends(seed in 0u64..500, frac in 0.05f64..0.8) {
            let prob = problem(seed, 120, 6);
            let cfg = AdmmConfig::default();
            let sol = admm_fixed(&prob, 1, frac * lambda_max(&prob.xi), &cfg).unwrap();
            for t in &sol.objective_trace {
                for w in t.windows(2) {
                    prop_assert!(w[1] <= w[0] + 1e-8, "{:?}", t);
                }
            }
            prop_assert!(max_abs(&(&sol.c * sol.c.transpose() - DMatrix::identity(1, 1))) < 1e-10);
        }
    }
}
