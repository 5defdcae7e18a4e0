//! Bootstrap variability traces for choosing the subspace dimension and the
//! kernel tuning values.
//!
//! For each candidate value the full-sample subspace is compared with the
//! subspaces fitted on `B` resamples; the mean distance `1 − γ` is recorded.
//! Replicate `b` draws from stream `b` of a ChaCha generator keyed by the
//! seed, so serial and parallel runs produce identical traces.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{standardize, Dataset, StandardizedSample};
use crate::density::{score_field, DensityAssumption, ScoreField};
use crate::error::{Result, SdrError};
use crate::itm::{build_candidate, ItmConfig, Space};
use crate::linalg::sym_eigen_desc;
use crate::subspace::{subspace_distance, trace_correlation};

/// Redraws allowed per replicate when a resample has a singular covariance.
pub const MAX_REDRAWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub parallel: bool,
    /// Moving-average width used when locating the peak of a dimension trace.
    pub smoothing_window: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 50,
            seed: 1,
            parallel: true,
            smoothing_window: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuningTarget {
    Sw2,
    St2,
    H,
}

impl std::str::FromStr for TuningTarget {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sw2" | "wx" => Ok(TuningTarget::Sw2),
            "st2" | "wy" => Ok(TuningTarget::St2),
            "h" | "wh" => Ok(TuningTarget::H),
            other => Err(format!("unknown tuning target '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionTrace {
    /// `"d"`, `"sw2"`, `"st2"` or `"h"`.
    pub target: String,
    pub candidates: Vec<f64>,
    pub mean_distance: Vec<f64>,
    pub replicates: usize,
    pub chosen: f64,
    pub seed: u64,
    /// Dimension traces only: the trace never rises, so the valley rule fell
    /// back to the global minimum.
    pub no_peak: bool,
    /// Dimension traces only: location of the peak used by the valley rule.
    pub peak: Option<f64>,
}

impl SelectionTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("candidate,mean_distance\n");
        for (c, m) in self.candidates.iter().zip(&self.mean_distance) {
            out.push_str(&format!("{c},{m}\n"));
        }
        out
    }

    pub fn chosen_dimension(&self) -> usize {
        self.chosen.round() as usize
    }
}

fn replicate_rng(seed: u64, b: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    rng
}

/// Draw a resample for replicate `b`, redrawing while the resampled
/// predictors have a singular covariance.
fn draw_resample(
    data: &Dataset,
    seed: u64,
    b: usize,
    standardize_y: bool,
) -> Result<StandardizedSample> {
    let n = data.n();
    let mut rng = replicate_rng(seed, b);
    let mut last = String::new();
    for _ in 0..=MAX_REDRAWS {
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        match standardize(&data.select_rows(&idx), standardize_y) {
            Ok(s) => return Ok(s),
            Err(e @ SdrError::SingularCovariance { .. }) => last = e.to_string(),
            Err(e) => return Err(e),
        }
    }
    Err(SdrError::ResampleFailure {
        replicate: b,
        attempts: MAX_REDRAWS + 1,
        reason: last,
    })
}

fn run_replicates<T: Send>(
    bcfg: &BootstrapConfig,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    if bcfg.parallel {
        (0..bcfg.replicates).into_par_iter().map(f).collect()
    } else {
        (0..bcfg.replicates).map(f).collect()
    }
}

/// Original-scale bases for every `d = 1..=p` from one eigendecomposition.
fn nested_bases(sample: &StandardizedSample, scores: &ScoreField, cfg: &ItmConfig) -> Result<Vec<DMatrix<f64>>> {
    let cand = build_candidate(sample, scores, cfg)?;
    let eig = sym_eigen_desc(&cand.m);
    let full = &sample.sigma_inv_sqrt * &eig.vectors;
    Ok((1..=sample.p()).map(|d| full.columns(0, d).into_owned()).collect())
}

fn check_replicates(bcfg: &BootstrapConfig) -> Result<()> {
    if bcfg.replicates < 2 {
        return Err(SdrError::InvalidConfig(format!(
            "need at least 2 bootstrap replicates, got {}",
            bcfg.replicates
        )));
    }
    Ok(())
}

/// Dimension variability trace over `d = 1..=p` and its valley point.
pub fn select_dimension(data: &Dataset, cfg: &ItmConfig, bcfg: &BootstrapConfig) -> Result<SelectionTrace> {
    check_replicates(bcfg)?;
    cfg.validate()?;
    let p = data.p();
    let full_sample = standardize(data, !cfg.raw_y)?;
    let full_scores = score_field(&full_sample.z, cfg.density, cfg.h, cfg.threshold);
    let full = nested_bases(&full_sample, &full_scores, cfg)?;

    let per_rep: Vec<Vec<f64>> = run_replicates(bcfg, |b| {
        let s = draw_resample(data, bcfg.seed, b, !cfg.raw_y)?;
        let sc = score_field(&s.z, cfg.density, cfg.h, cfg.threshold);
        let bases = nested_bases(&s, &sc, cfg)?;
        (0..p)
            .map(|k| subspace_distance(&bases[k], &full[k], None))
            .collect::<Result<Vec<f64>>>()
    })?;

    let mean_distance = mean_over(&per_rep, p);
    let (idx, no_peak, peak) = valley_point(&mean_distance, bcfg.smoothing_window);
    Ok(SelectionTrace {
        target: "d".into(),
        candidates: (1..=p).map(|d| d as f64).collect(),
        mean_distance,
        replicates: bcfg.replicates,
        chosen: (idx + 1) as f64,
        seed: bcfg.seed,
        no_peak,
        peak: peak.map(|k| (k + 1) as f64),
    })
}

fn mean_over(rows: &[Vec<f64>], width: usize) -> Vec<f64> {
    let mut acc = vec![0.0; width];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    acc.iter().map(|a| (a / rows.len() as f64).clamp(0.0, 1.0)).collect()
}

/// Centered moving average; windows are truncated at the ends.
pub fn moving_average(v: &[f64], window: usize) -> Vec<f64> {
    let half = window.max(1) / 2;
    (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(v.len() - 1);
            v[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

fn first_arg(v: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if better(x, v[best]) {
            best = i;
        }
    }
    best
}

/// Valley rule on a dimension trace. Returns `(valley index, no_peak, peak index)`.
///
/// The smoothed trace locates the broad peak; the raw maximum near it is the
/// peak `d*`, and the valley is the raw minimum strictly before `d*`. When the
/// peak sits at the first entry there is nothing before it and the global
/// minimum is returned with `no_peak` set.
pub fn valley_point(trace: &[f64], window: usize) -> (usize, bool, Option<usize>) {
    assert!(!trace.is_empty());
    let smooth = moving_average(trace, window);
    let k = first_arg(&smooth, |a, b| a > b);
    let half = window.max(1) / 2;
    let lo = k.saturating_sub(half);
    let hi = (k + half).min(trace.len() - 1);
    let peak = lo + first_arg(&trace[lo..=hi], |a, b| a > b);
    if peak == 0 {
        return (first_arg(trace, |a, b| a < b), true, None);
    }
    (first_arg(&trace[..peak], |a, b| a < b), false, Some(peak))
}

fn with_value(cfg: &ItmConfig, target: TuningTarget, v: f64) -> ItmConfig {
    let mut c = cfg.clone();
    match target {
        TuningTarget::Sw2 => c.sw2 = v,
        TuningTarget::St2 => c.st2 = v,
        TuningTarget::H => c.h = Some(v),
    }
    c
}

fn basis_on(sample: &StandardizedSample, cfg: &ItmConfig, d: usize) -> Result<DMatrix<f64>> {
    let sc = score_field(&sample.z, cfg.density, cfg.h, cfg.threshold);
    let cand = build_candidate(sample, &sc, cfg)?;
    let eig = sym_eigen_desc(&cand.m);
    Ok(&sample.sigma_inv_sqrt * eig.vectors.columns(0, d))
}

/// Tuning variability trace over `grid`; the chosen value minimizes the mean
/// distance. Grid values whose fits fail score the worst distance, 1.
pub fn select_tuning(
    data: &Dataset,
    cfg: &ItmConfig,
    target: TuningTarget,
    grid: &[f64],
    d: usize,
    bcfg: &BootstrapConfig,
) -> Result<SelectionTrace> {
    check_replicates(bcfg)?;
    if grid.is_empty() {
        return Err(SdrError::InvalidConfig("tuning grid is empty".into()));
    }
    if grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(SdrError::InvalidConfig("tuning grid values must be positive".into()));
    }
    let p = data.p();
    if d == 0 || d > p {
        return Err(SdrError::DimensionOutOfRange { d, p });
    }
    let full_sample = standardize(data, !cfg.raw_y)?;
    let cfgs: Vec<ItmConfig> = grid.iter().map(|&v| with_value(cfg, target, v)).collect();
    let full: Vec<Option<DMatrix<f64>>> = cfgs
        .iter()
        .map(|c| c.validate().ok().and_then(|_| basis_on(&full_sample, c, d).ok()))
        .collect();

    let per_rep: Vec<Vec<f64>> = run_replicates(bcfg, |b| {
        let s = draw_resample(data, bcfg.seed, b, !cfg.raw_y)?;
        Ok(cfgs
            .iter()
            .zip(&full)
            .map(|(c, f)| {
                let Some(f) = f else { return 1.0 };
                basis_on(&s, c, d)
                    .and_then(|bb| trace_correlation(&bb, f, None))
                    .map(|g| 1.0 - g)
                    .unwrap_or(1.0)
            })
            .collect())
    })?;

    let mean_distance = mean_over(&per_rep, grid.len());
    let idx = first_arg(&mean_distance, |a, b| a < b);
    Ok(SelectionTrace {
        target: match target {
            TuningTarget::Sw2 => "sw2",
            TuningTarget::St2 => "st2",
            TuningTarget::H => "h",
        }
        .into(),
        candidates: grid.to_vec(),
        mean_distance,
        replicates: bcfg.replicates,
        chosen: grid[idx],
        seed: bcfg.seed,
        no_peak: false,
        peak: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrids {
    pub sw2: Vec<f64>,
    pub st2: Vec<f64>,
    pub h: Vec<f64>,
}

impl Default for TuningGrids {
    fn default() -> Self {
        let steps = |lo: f64, hi: f64, k: usize| -> Vec<f64> {
            (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
        };
        Self {
            sw2: steps(0.05, 1.0, 20),
            st2: steps(0.1, 2.0, 20),
            h: steps(0.1, 1.5, 15),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TuningReport {
    pub dimension: SelectionTrace,
    pub sw2: SelectionTrace,
    pub st2: Option<SelectionTrace>,
    pub h: Option<SelectionTrace>,
    pub d: usize,
    pub config: ItmConfig,
}

/// Coordinate-wise protocol: `d` at `σ_u² = 0.1, σ_v² = 1`, then `σ_u²`, then
/// `σ_v²` (distribution target only), then `h` (non-normal scores only).
pub fn tune_all(
    data: &Dataset,
    base: &ItmConfig,
    grids: &TuningGrids,
    bcfg: &BootstrapConfig,
) -> Result<TuningReport> {
    let mut cfg = ItmConfig {
        sw2: 0.1,
        st2: 1.0,
        ..base.clone()
    };
    let dimension = select_dimension(data, &cfg, bcfg)?;
    let d = dimension.chosen_dimension();
    let sw2 = select_tuning(data, &cfg, TuningTarget::Sw2, &grids.sw2, d, bcfg)?;
    cfg.sw2 = sw2.chosen;
    let st2 = if cfg.space == Space::Pdf {
        let t = select_tuning(data, &cfg, TuningTarget::St2, &grids.st2, d, bcfg)?;
        cfg.st2 = t.chosen;
        Some(t)
    } else {
        None
    };
    let h = if cfg.density != DensityAssumption::Normal {
        let t = select_tuning(data, &cfg, TuningTarget::H, &grids.h, d, bcfg)?;
        cfg.h = Some(t.chosen);
        Some(t)
    } else {
        None
    };
    Ok(TuningReport {
        dimension,
        sw2,
        st2,
        h,
        d,
        config: cfg,
    })
}
