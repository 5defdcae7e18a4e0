//! `sdr-kit` command line.

pub mod ingest;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Value};

use crate::admm::{admmft, AdmmConfig};
use crate::bootstrap::{select_dimension, select_tuning, tune_all, BootstrapConfig, TuningGrids, TuningTarget};
use crate::data::Dataset;
use crate::density::{DensityAssumption, Threshold};
use crate::error::{Result, SdrError};
use crate::ftire::{xire_with_design, InnerProductKind, QdfInit, QdfOptions, XireConfig};
use crate::iht::{iht_estimate, IhtConfig};
use crate::invfm::{
    dimension_tests, invfm_estimate, prepare_sample, sequential_test, FourierDesign, InvfmKernel, InvfmOptions,
    TestKind, TestNormalizer, TestOptions,
};
use crate::itm::{itm_estimate, ItmConfig, Method, Space};
use crate::subspace::SubspaceBasis;
use crate::synth::{generate, Model, SynthSpec, XDist};

use ingest::{ingest, matrix_csv, write_dataset, IngestReport};

pub const SCHEMA: &str = "sdr-kit/1";

#[derive(Debug, Parser)]
#[command(name = "sdr-kit", version, about = "Integral-transform sufficient dimension reduction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Cap on worker threads.
    #[arg(long, global = true, env = "SDR_KIT_THREADS")]
    pub threads: Option<usize>,

    /// Directory for relative output paths.
    #[arg(long, global = true, env = "SDR_KIT_OUT_DIR")]
    pub out_dir: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Output file; standard output when absent.
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// CSV file with a header row.
    #[arg(long, short)]
    pub input: PathBuf,

    /// Response columns by name or 1-based index, comma separated (default: last column).
    #[arg(long)]
    pub response: Option<String>,

    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Fm,
    Cm,
    Iht,
}

impl std::str::FromStr for Estimator {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "FM" => Ok(Self::Fm),
            "CM" => Ok(Self::Cm),
            "IHT" => Ok(Self::Iht),
            other => Err(format!("unknown method '{other}' (expected FM, CM or IHT)")),
        }
    }
}

#[derive(Debug, Args)]
pub struct ItmArgs {
    /// Target subspace: mean or pdf.
    #[arg(long, default_value = "mean")]
    pub space: Space,

    /// FM, CM (and IHT for `estimate`).
    #[arg(long, default_value = "FM")]
    pub method: Estimator,

    /// Predictor density used for scores: normal, kernel or elliptic.
    #[arg(long, default_value = "normal")]
    pub density: DensityAssumption,

    #[arg(long, default_value_t = 0.1)]
    pub sw2: f64,

    #[arg(long, default_value_t = 1.0)]
    pub st2: f64,

    /// Bandwidth for kernel/elliptic scores (rule of thumb when absent).
    #[arg(long)]
    pub h: Option<f64>,

    /// Trim points whose density estimate is below this quantile.
    #[arg(long, conflicts_with = "trim_level")]
    pub trim_quantile: Option<f64>,

    /// Trim points whose density estimate is below this absolute level.
    #[arg(long)]
    pub trim_level: Option<f64>,

    /// Use the response without standardizing it.
    #[arg(long)]
    pub raw_y: bool,
}

impl ItmArgs {
    fn config(&self) -> Result<ItmConfig> {
        let method = match self.method {
            Estimator::Fm => Method::FM,
            Estimator::Cm => Method::CM,
            Estimator::Iht => {
                return Err(SdrError::InvalidConfig("IHT is only available through `estimate`".into()));
            }
        };
        let threshold = match (self.trim_quantile, self.trim_level) {
            (Some(q), _) => Some(Threshold::Quantile(q)),
            (None, Some(b)) => Some(Threshold::Fixed(b)),
            _ => None,
        };
        let cfg = ItmConfig {
            space: self.space,
            method,
            sw2: self.sw2,
            st2: self.st2,
            density: self.density,
            h: self.h,
            threshold,
            raw_y: self.raw_y,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct BootArgs {
    /// Bootstrap replicates.
    #[arg(long = "replicates", short = 'B', default_value_t = 50)]
    pub replicates: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Run replicates on one thread (results are identical).
    #[arg(long)]
    pub serial: bool,

    #[arg(long, default_value_t = 3)]
    pub smoothing_window: usize,
}

impl BootArgs {
    fn config(&self) -> BootstrapConfig {
        BootstrapConfig {
            replicates: self.replicates,
            seed: self.seed,
            parallel: !self.serial,
            smoothing_window: self.smoothing_window,
        }
    }
}

#[derive(Debug, Args)]
pub struct FourierArgs {
    /// Number of random frequencies.
    #[arg(long, short = 'k', default_value_t = 10)]
    pub k: usize,

    /// Standard deviation of the frequency draws.
    #[arg(long, default_value_t = 1.0)]
    pub omega_sd: f64,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Center predictors without whitening.
    #[arg(long)]
    pub no_scale_x: bool,

    #[arg(long)]
    pub raw_y: bool,
}

impl FourierArgs {
    fn options(&self) -> InvfmOptions {
        InvfmOptions {
            scale_x: !self.no_scale_x,
            standardize_y: !self.raw_y,
        }
    }

    fn design(&self, q: usize) -> Result<FourierDesign> {
        FourierDesign::random(q, self.k, self.omega_sd, self.seed)
    }
}

fn parse_init(s: &str) -> std::result::Result<QdfInit, String> {
    match s.to_ascii_lowercase().as_str() {
        "invfm" => Ok(QdfInit::Invfm),
        "unit" => Ok(QdfInit::Unit),
        other => Err(format!("unknown initialization '{other}' (expected invfm or unit)")),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bootstrap dimension-variability trace and the chosen dimension.
    SelectDim {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        itm: ItmArgs,
        #[command(flatten)]
        boot: BootArgs,
    },
    /// Bootstrap selection of sw2, st2 and h.
    Tune {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        itm: ItmArgs,
        #[command(flatten)]
        boot: BootArgs,
        /// Tune a single parameter (sw2, st2, h) at fixed `--d`; all of them otherwise.
        #[arg(long)]
        target: Option<TuningTarget>,
        #[arg(long, short = 'd', default_value_t = 1)]
        d: usize,
        /// Grid for `--target`, comma separated.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Basis from FM, CM or IHT.
    Estimate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        itm: ItmArgs,
        #[arg(long, short = 'd', default_value_t = 1)]
        d: usize,
    },
    /// Sequential dimension tests on the inverse Fourier kernel.
    TestDim {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        fourier: FourierArgs,
        /// Also report the tests at this hypothesised dimension.
        #[arg(long, short = 'm')]
        m: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
        /// weighted, scaled or adjusted.
        #[arg(long, default_value = "scaled")]
        test: TestKind,
        /// trace or null.
        #[arg(long, default_value = "trace")]
        normalizer: TestNormalizer,
        /// Monte Carlo draws for the weighted statistic.
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
    },
    /// Inverse Fourier regression basis.
    Invfm {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        fourier: FourierArgs,
        #[arg(long, short = 'd', default_value_t = 1)]
        d: usize,
    },
    /// Minimum-discrepancy fit (FT-IRE, DIRE, SIRE, RIRE, DRIRE).
    Xire {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        fourier: FourierArgs,
        #[arg(long, short = 'd', default_value_t = 1)]
        d: usize,
        #[arg(long, default_value = "FT-IRE")]
        estimator: InnerProductKind,
        /// Frequency group sizes for DIRE/DRIRE, comma separated.
        #[arg(long, value_delimiter = ',')]
        blocks: Option<Vec<usize>>,
        /// invfm or unit.
        #[arg(long, default_value = "invfm", value_parser = parse_init)]
        init: QdfInit,
        #[arg(long, default_value_t = 500)]
        max_sweeps: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Row-sparse Fourier inverse regression (iterated ADMM).
    Sparse {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, short = 'd', default_value_t = 1)]
        d: usize,
        /// Number of random frequencies.
        #[arg(long, short = 'm', default_value_t = 30)]
        m: usize,
        /// Penalty; chosen by cross-validation when absent.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, default_value_t = 5)]
        no_b: usize,
        #[arg(long, default_value_t = 20)]
        no_c: usize,
        #[arg(long, default_value_t = 2)]
        no_w: usize,
        #[arg(long)]
        sparse_cov: bool,
        #[arg(long)]
        scale_x: bool,
        #[arg(long)]
        raw_y: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 20)]
        grid: usize,
    },
    /// Draw a synthetic dataset as CSV.
    Simulate {
        #[arg(long, short = 'n', default_value_t = 200)]
        n: usize,
        #[arg(long, short = 'p', default_value_t = 6)]
        p: usize,
        #[arg(long, short = 'q', default_value_t = 1)]
        q: usize,
        /// linear, cubic_single_index, double_index or sparse_support.
        #[arg(long, default_value = "linear")]
        model: Model,
        #[arg(long, default_value_t = 0.1)]
        noise_sd: f64,
        /// normal, elliptic_t or uniform.
        #[arg(long, default_value = "normal")]
        x_dist: XDist,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

struct Table {
    suffix: &'static str,
    body: String,
}

struct Outcome {
    command: &'static str,
    input: Value,
    config: Value,
    seed: Option<u64>,
    warnings: Vec<String>,
    result: Value,
    tables: Vec<Table>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

/// Row-major nested arrays.
fn mat(m: &DMatrix<f64>) -> Value {
    Value::Array(m.row_iter().map(|r| json!(r.iter().copied().collect::<Vec<f64>>())).collect())
}

fn vecv(v: &DVector<f64>) -> Value {
    json!(v.iter().copied().collect::<Vec<f64>>())
}

fn dir_names(d: usize) -> Vec<String> {
    (1..=d).map(|k| format!("dir{k}")).collect()
}

fn spectrum_csv(v: &DVector<f64>) -> String {
    let mut out = String::from("index,eigenvalue\n");
    for (i, x) in v.iter().enumerate() {
        out.push_str(&format!("{},{x:?}\n", i + 1));
    }
    out
}

fn basis_value(b: &SubspaceBasis, names: &[String]) -> Value {
    json!({
        "predictors": names,
        "basis": mat(&b.basis),
        "whitened": mat(&b.whitened),
        "eigenvalues": vecv(&b.eigvals),
        "spectrum": vecv(&b.full_spectrum),
    })
}

fn basis_tables(b: &SubspaceBasis) -> Vec<Table> {
    let mut t = vec![Table {
        suffix: "basis",
        body: matrix_csv(&b.basis, &dir_names(b.d())),
    }];
    if b.full_spectrum.len() > 0 {
        t.push(Table {
            suffix: "eigenvalues",
            body: spectrum_csv(&b.full_spectrum),
        });
    }
    t
}

fn load(input: &InputArgs) -> Result<(Dataset, Value)> {
    if !input.delimiter.is_ascii() {
        return Err(SdrError::InvalidConfig("delimiter must be a single ASCII character".into()));
    }
    let (data, rep): (Dataset, IngestReport) = ingest(&input.input, input.delimiter as u8, input.response.as_deref())?;
    let info = json!({
        "path": input.input.display().to_string(),
        "response": input.response,
        "delimiter": input.delimiter.to_string(),
        "n": data.n(),
        "p": data.p(),
        "q": data.q(),
        "rows_read": rep.rows_read,
        "dropped_rows": rep.dropped,
        "predictors": rep.predictors,
        "responses": rep.response,
    });
    Ok((data, info))
}

fn execute(command: &Command) -> Result<Outcome> {
    match command {
        Command::SelectDim { input, itm, boot } => {
            let (data, info) = load(input)?;
            let cfg = itm.config()?;
            let bcfg = boot.config();
            let trace = select_dimension(&data, &cfg, &bcfg)?;
            let mut warnings = Vec::new();
            if trace.no_peak {
                warnings.push("NoPeak: variability trace has no interior peak; global minimum used".into());
            }
            Ok(Outcome {
                command: "select-dim",
                input: info,
                config: json!({ "itm": cfg, "bootstrap": bcfg }),
                seed: Some(bcfg.seed),
                warnings,
                result: json!({ "d": trace.chosen_dimension(), "trace": trace }),
                tables: vec![Table { suffix: "trace", body: trace.to_csv() }],
            })
        }
        Command::Tune { input, itm, boot, target, d, grid } => {
            let (data, info) = load(input)?;
            let cfg = itm.config()?;
            let bcfg = boot.config();
            let grids = TuningGrids::default();
            match target {
                Some(t) => {
                    let g = grid.clone().unwrap_or_else(|| match t {
                        TuningTarget::Sw2 => grids.sw2.clone(),
                        TuningTarget::St2 => grids.st2.clone(),
                        TuningTarget::H => grids.h.clone(),
                    });
                    let trace = select_tuning(&data, &cfg, *t, &g, *d, &bcfg)?;
                    Ok(Outcome {
                        command: "tune",
                        input: info,
                        config: json!({ "itm": cfg, "bootstrap": bcfg, "target": t, "d": d, "grid": g }),
                        seed: Some(bcfg.seed),
                        warnings: vec![],
                        result: json!({ "chosen": trace.chosen, "trace": trace }),
                        tables: vec![Table { suffix: "trace", body: trace.to_csv() }],
                    })
                }
                None => {
                    let rep = tune_all(&data, &cfg, &grids, &bcfg)?;
                    let mut body = String::from("target,candidate,mean_distance\n");
                    for tr in [Some(&rep.dimension), Some(&rep.sw2), rep.st2.as_ref(), rep.h.as_ref()].into_iter().flatten() {
                        for (c, m) in tr.candidates.iter().zip(&tr.mean_distance) {
                            body.push_str(&format!("{},{c:?},{m:?}\n", tr.target));
                        }
                    }
                    Ok(Outcome {
                        command: "tune",
                        input: info,
                        config: json!({ "itm": cfg, "bootstrap": bcfg, "grids": grids }),
                        seed: Some(bcfg.seed),
                        warnings: vec![],
                        result: to_value(&rep),
                        tables: vec![Table { suffix: "trace", body }],
                    })
                }
            }
        }
        Command::Estimate { input, itm, d } => {
            let (data, info) = load(input)?;
            if itm.method == Estimator::Iht {
                let cfg = IhtConfig::default();
                let (basis, state) = iht_estimate(&data, *d, &cfg)?;
                let mut result = basis_value(&basis, &data.x_names);
                result["method"] = json!("IHT");
                result["cozy_log_norms"] = json!(state.log_norms);
                return Ok(Outcome {
                    command: "estimate",
                    input: info,
                    config: json!({ "method": "IHT", "d": d, "iht": cfg }),
                    seed: None,
                    warnings: vec![],
                    result,
                    tables: basis_tables(&basis),
                });
            }
            let cfg = itm.config()?;
            let (basis, cand) = itm_estimate(&data, &cfg, *d)?;
            let mut result = basis_value(&basis, &data.x_names);
            result["recipe"] = to_value(&cand.recipe);
            Ok(Outcome {
                command: "estimate",
                input: info,
                config: json!({ "method": cfg.method, "d": d, "itm": cfg }),
                seed: None,
                warnings: vec![],
                result,
                tables: basis_tables(&basis),
            })
        }
        Command::TestDim { input, fourier, m, level, test, normalizer, draws } => {
            let (data, info) = load(input)?;
            let opts = fourier.options();
            let design = fourier.design(data.q())?;
            let sample = prepare_sample(&data, &opts)?;
            let kernel = InvfmKernel::from_sample(&sample.z, &sample.y_std, &design)?;
            let topts = TestOptions {
                normalizer: *normalizer,
                draws: *draws,
                seed: fourier.seed,
            };
            let mut warnings = Vec::new();
            if kernel.is_degenerate() {
                warnings.push(format!("DegenerateKernel: trace of the kernel matrix is {:e}", kernel.trace_v));
            }
            let seq = sequential_test(&kernel, *level, *test, &topts)?;
            let at_m = match m {
                Some(m) => Some(dimension_tests(&kernel, *m, &topts)?),
                None => None,
            };
            let mut body = String::from("m,stat_weighted,stat_scaled,stat_adjusted,p_weighted,p_scaled,p_adjusted\n");
            for r in &seq.reports {
                body.push_str(&format!(
                    "{},{:?},{:?},{:?},{:?},{:?},{:?}\n",
                    r.m, r.stats.weighted, r.stats.scaled, r.stats.adjusted, r.pvalues.weighted, r.pvalues.scaled, r.pvalues.adjusted
                ));
            }
            Ok(Outcome {
                command: "test-dim",
                input: info,
                config: json!({
                    "k": fourier.k, "omega_sd": fourier.omega_sd, "invfm": opts, "m": m,
                    "level": level, "test": test, "tests": topts, "frequencies": mat(&design.w),
                }),
                seed: Some(fourier.seed),
                warnings,
                result: json!({ "chosen": seq.chosen, "sequential": seq, "report": at_m }),
                tables: vec![Table { suffix: "tests", body }],
            })
        }
        Command::Invfm { input, fourier, d } => {
            let (data, info) = load(input)?;
            let opts = fourier.options();
            let design = fourier.design(data.q())?;
            let fit = invfm_estimate(&data, *d, &design, &opts)?;
            let mut result = basis_value(&fit.basis, &data.x_names);
            result["kernel_trace"] = json!(fit.kernel.trace_v);
            Ok(Outcome {
                command: "invfm",
                input: info,
                config: json!({ "d": d, "k": fourier.k, "omega_sd": fourier.omega_sd, "invfm": opts, "frequencies": mat(&design.w) }),
                seed: Some(fourier.seed),
                warnings: fit.warnings.clone(),
                result,
                tables: basis_tables(&fit.basis),
            })
        }
        Command::Xire { input, fourier, d, estimator, blocks, init, max_sweeps, tol } => {
            let (data, info) = load(input)?;
            let cfg = XireConfig {
                kind: *estimator,
                blocks: blocks.clone(),
                init: *init,
                invfm: fourier.options(),
                qdf: QdfOptions { max_sweeps: *max_sweeps, tol: *tol },
            };
            let design = fourier.design(data.q())?;
            let fit = xire_with_design(&data, *d, &design, &cfg)?;
            let s = &fit.solution;
            let mut body = String::from("sweep,objective\n");
            for (i, v) in s.objective_trace.iter().enumerate() {
                body.push_str(&format!("{i},{v:?}\n"));
            }
            Ok(Outcome {
                command: "xire",
                input: info,
                config: json!({ "d": d, "k": fourier.k, "omega_sd": fourier.omega_sd, "xire": cfg, "frequencies": mat(&design.w) }),
                seed: Some(fourier.seed),
                warnings: fit.warnings.clone(),
                result: json!({
                    "estimator": fit.kind,
                    "predictors": data.x_names,
                    "gamma": mat(&s.gamma),
                    "c": mat(&s.c),
                    "objective": s.objective,
                    "objective_trace": s.objective_trace,
                    "iterations": s.iterations,
                    "converged": s.converged,
                    "ridge_applied": fit.ridge_applied,
                }),
                tables: vec![
                    Table { suffix: "basis", body: matrix_csv(&s.gamma, &dir_names(*d)) },
                    Table { suffix: "objective", body },
                ],
            })
        }
        Command::Sparse {
            input, d, m, lambda, rho, eps, no_b, no_c, no_w, sparse_cov, scale_x, raw_y, seed, folds, grid,
        } => {
            let (data, info) = load(input)?;
            let cfg = AdmmConfig {
                rho: *rho,
                eps: *eps,
                no_b: *no_b,
                no_c: *no_c,
                no_w: *no_w,
                sparse_cov: *sparse_cov,
                scale_x: *scale_x,
                standardize_y: !raw_y,
                weights: None,
                seed: *seed,
                cv_folds: *folds,
                cv_grid: *grid,
            };
            let sol = admmft(&data, *d, *m, *lambda, &cfg)?;
            let active_names: Vec<&String> = sol.active_set.iter().map(|&j| &data.x_names[j]).collect();
            let mut tables = vec![Table { suffix: "basis", body: matrix_csv(&sol.gamma, &dir_names(*d)) }];
            if let Some(cv) = &sol.cv {
                let mut body = String::from("lambda,score\n");
                for (l, s) in cv.lambdas.iter().zip(&cv.scores) {
                    body.push_str(&format!("{l:?},{s:?}\n"));
                }
                tables.push(Table { suffix: "cv", body });
            }
            Ok(Outcome {
                command: "sparse",
                input: info,
                config: json!({ "d": d, "m": m, "lambda": lambda, "admm": cfg }),
                seed: Some(*seed),
                warnings: sol.warnings.clone(),
                result: json!({
                    "predictors": data.x_names,
                    "gamma": mat(&sol.gamma),
                    "c": mat(&sol.c),
                    "active_set": sol.active_set,
                    "active_names": active_names,
                    "lambda": sol.lambda,
                    "weights": sol.weights,
                    "objective_trace": sol.objective_trace,
                    "converged": sol.converged,
                    "cv": sol.cv,
                }),
                tables,
            })
        }
        Command::Simulate { n, p, q, model, noise_sd, x_dist, seed } => {
            let spec = SynthSpec {
                n: *n,
                p: *p,
                q: *q,
                model: *model,
                noise_sd: *noise_sd,
                x_dist: *x_dist,
                seed: *seed,
            };
            let s = generate(&spec)?;
            let mut buf = Vec::new();
            write_dataset(&mut buf, &s.data, b',')?;
            Ok(Outcome {
                command: "simulate",
                input: Value::Null,
                config: to_value(&spec),
                seed: Some(*seed),
                warnings: vec![],
                result: json!({ "true_basis": mat(&s.basis), "n": n, "p": p, "q": q }),
                tables: vec![Table {
                    suffix: "data",
                    body: String::from_utf8(buf).expect("utf-8 csv"),
                }],
            })
        }
    }
}

fn resolve_out(out_dir: Option<&Path>, out: Option<&Path>) -> Option<PathBuf> {
    let out = out?;
    match out_dir {
        Some(dir) if out.is_relative() => Some(dir.join(out)),
        _ => Some(out.to_path_buf()),
    }
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, body)?;
    Ok(())
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(format!("{suffix}.csv"))
}

fn envelope(o: &Outcome) -> Value {
    json!({
        "schema": SCHEMA,
        "command": o.command,
        "input": o.input,
        "config": o.config,
        "seed": o.seed,
        "warnings": o.warnings,
        "result": o.result,
    })
}

fn emit(cli: &Cli, o: Outcome) -> Result<()> {
    let out = resolve_out(cli.out_dir.as_deref(), cli.out.as_deref());
    let mut stdout = std::io::stdout().lock();
    // simulate always emits the dataset itself; the JSON summary goes to stdout
    if o.command == "simulate" {
        let data = &o.tables[0].body;
        match &out {
            Some(path) => {
                write_file(path, data)?;
                if cli.format == Format::Json {
                    let mut env = envelope(&o);
                    env["result"]["path"] = json!(path.display().to_string());
                    writeln!(stdout, "{}", serde_json::to_string_pretty(&env).expect("json"))?;
                }
            }
            None => stdout.write_all(data.as_bytes())?,
        }
        return Ok(());
    }
    match cli.format {
        Format::Json => {
            let text = serde_json::to_string_pretty(&envelope(&o)).expect("json") + "\n";
            match &out {
                Some(path) => write_file(path, &text)?,
                None => stdout.write_all(text.as_bytes())?,
            }
        }
        Format::Csv => {
            let (main, rest) = o.tables.split_first().expect("at least one table");
            match &out {
                Some(path) => {
                    write_file(path, &main.body)?;
                    for t in rest {
                        write_file(&sidecar(path, t.suffix), &t.body)?;
                    }
                }
                None => stdout.write_all(main.body.as_bytes())?,
            }
            for w in &o.warnings {
                eprintln!("warning: {w}");
            }
        }
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(SdrError::InvalidConfig("--threads must be at least 1".into()));
        }
        // a second initialization in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let outcome = execute(&cli.command)?;
    emit(cli, outcome)
}

pub fn error_json(e: &SdrError) -> String {
    serde_json::to_string_pretty(&json!({
        "schema": SCHEMA,
        "error": { "kind": e.kind(), "message": e.to_string() },
    }))
    .expect("json")
}

pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
