//! Experiment grids: a problem, a list of optimizers and a list of seeds.
//!
//! A config is a TOML file like
//!
//! ```toml
//! optimizers = ["home3", "adam"]
//! seeds = [0, 1, 2]
//! iters = 100
//! output_dir = "runs/dl"
//! format = "csv"
//!
//! [problem]
//! kind = "dictlearn"
//! rows = 40
//! cols = 60
//! rank = 5
//!
//! [optimizer]
//! beta3 = 0.99
//! ```
//!
//! Each seed is one subject: it fixes the synthetic data, the starting
//! point, the permutation stream and the noise stream, so every optimizer
//! sees the same problem instance for a given seed. Every (optimizer, seed)
//! pair writes `trace_<optimizer>_seed<seed>.<ext>`; `summary.<ext>` is
//! then computed from the written traces alone. Wall-clock times go to
//! `timing.csv` so that the summary stays reproducible.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{icc_oneway, quantile, rate_slope, RunRecord};
use crate::optim::HomeConfig;
use crate::problems::{
    load_csv, load_logreg_csv, synth_logreg, synth_lowrank, DictLearnProblem, DnmfProblem, Problem,
    ProblemError, Quadratic,
};
use crate::runner::{run_admm, run_with, OptimizerKind, RunOptions};
use crate::tensor::DenseMatrix;
use crate::trace::{load_trace, write_trace, TraceError, TraceFormat};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Quadratic,
    Dictlearn,
    Dnmf,
    NoisyDnmf,
    Logreg,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 5] = [
        Self::Quadratic,
        Self::Dictlearn,
        Self::Dnmf,
        Self::NoisyDnmf,
        Self::Logreg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Quadratic => "quadratic",
            Self::Dictlearn => "dictlearn",
            Self::Dnmf => "dnmf",
            Self::NoisyDnmf => "noisy-dnmf",
            Self::Logreg => "logreg",
        }
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown problem {s:?} (expected one of quadratic, dictlearn, dnmf, noisy-dnmf, logreg)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// Quadratic: dimension, curvature and starting radius.
    pub dim: usize,
    pub curvature: f64,
    pub init_radius: f64,
    /// Matrix problems: synthetic input shape and rank.
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub lambda: f64,
    /// DNMF inner layer widths and background penalty.
    pub layers: Vec<usize>,
    pub penalty: f64,
    /// Logistic regression synthetic size and ridge weight.
    pub samples: usize,
    pub features: usize,
    pub l2_reg: f64,
    /// CSV input instead of synthetic data. Relative paths are resolved
    /// against the config file's directory.
    pub data: Option<PathBuf>,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self {
            kind: ProblemKind::Quadratic,
            dim: 16,
            curvature: 1.0,
            init_radius: 0.5,
            rows: 40,
            cols: 60,
            rank: 5,
            lambda: DictLearnProblem::DEFAULT_LAMBDA,
            layers: vec![10, 5],
            penalty: DnmfProblem::DEFAULT_PENALTY,
            samples: 200,
            features: 10,
            l2_reg: 0.01,
            data: None,
        }
    }
}

/// Step hyperparameters; the horizon, seed and randomization switch are
/// set per run from the enclosing [`ExperimentConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerParams {
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub power: u32,
    pub third_moment: bool,
    pub grad_clip: Option<f64>,
    pub storm_momentum: f64,
    pub admm_inner_iters: usize,
    /// Permute the iterate every `n` steps in addition to the gap trigger.
    pub forced_randomization_period: Option<usize>,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        let h = HomeConfig::default();
        Self {
            base_lr: h.base_lr,
            beta1: h.beta1,
            beta2: h.beta2,
            beta3: h.beta3,
            eps1: h.eps1,
            eps2: h.eps2,
            power: h.power,
            third_moment: h.third_moment,
            grad_clip: h.grad_clip,
            storm_momentum: h.storm_momentum,
            admm_inner_iters: RunOptions::new().admm_inner_iters,
            forced_randomization_period: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub optimizers: Vec<OptimizerKind>,
    pub seeds: Vec<u64>,
    pub iters: usize,
    /// Unset means on for noisy DNMF and off for everything else.
    pub randomize: Option<bool>,
    pub output_dir: PathBuf,
    pub format: TraceFormat,
    pub optimizer: OptimizerParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSpec::default(),
            optimizers: vec![OptimizerKind::Home3],
            seeds: vec![0],
            iters: 100,
            randomize: None,
            output_dir: PathBuf::from("runs"),
            format: TraceFormat::Csv,
            optimizer: OptimizerParams::default(),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub problem: Option<ProblemKind>,
    pub optimizers: Vec<OptimizerKind>,
    pub seeds: Vec<u64>,
    pub iters: Option<usize>,
    pub beta3: Option<f64>,
    pub randomize: Option<bool>,
    pub output_dir: Option<PathBuf>,
    pub format: Option<TraceFormat>,
    pub data: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(data), Some(dir)) = (&cfg.problem.data, path.parent()) {
            if data.is_relative() {
                cfg.problem.data = Some(dir.join(data));
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(k) = o.problem {
            self.problem.kind = k;
        }
        if !o.optimizers.is_empty() {
            self.optimizers = o.optimizers.clone();
        }
        if !o.seeds.is_empty() {
            self.seeds = o.seeds.clone();
        }
        if let Some(t) = o.iters {
            self.iters = t;
        }
        if let Some(b) = o.beta3 {
            self.optimizer.beta3 = b;
        }
        if o.randomize.is_some() {
            self.randomize = o.randomize;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(f) = o.format {
            self.format = f;
        }
        if o.data.is_some() {
            self.problem.data = o.data.clone();
        }
    }

    pub fn randomization_enabled(&self) -> bool {
        self.randomize
            .unwrap_or(self.problem.kind == ProblemKind::NoisyDnmf)
    }

    /// Step configuration for one seed.
    pub fn home_config(&self, seed: u64) -> HomeConfig {
        let p = &self.optimizer;
        HomeConfig {
            base_lr: p.base_lr,
            beta1: p.beta1,
            beta2: p.beta2,
            beta3: p.beta3,
            eps1: p.eps1,
            eps2: p.eps2,
            max_iters: self.iters,
            randomize: self.randomization_enabled(),
            seed,
            power: p.power,
            third_moment: p.third_moment,
            grad_clip: p.grad_clip,
            storm_momentum: p.storm_momentum,
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            forced_randomization_period: self.optimizer.forced_randomization_period,
            admm_inner_iters: self.optimizer.admm_inner_iters,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.optimizers.is_empty() {
            return bad("at least one optimizer is required".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(d) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return bad(format!("seed {d} is listed twice"));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(d) = self.optimizers.iter().find(|o| !seen.insert(**o)) {
            return bad(format!("optimizer {d} is listed twice"));
        }
        if self.optimizers.contains(&OptimizerKind::Admm)
            && self.problem.kind != ProblemKind::Dictlearn
        {
            return bad(format!(
                "the admm baseline only applies to dictlearn, not {}",
                self.problem.kind.as_str()
            ));
        }
        if self.problem.kind == ProblemKind::Quadratic && self.problem.data.is_some() {
            return bad("the quadratic problem takes no data file".into());
        }
        if self.optimizer.admm_inner_iters == 0 {
            return bad("admm_inner_iters must be positive".into());
        }
        self.home_config(0)
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))
    }

    /// The problem instance for one seed.
    pub fn build_problem(&self, seed: u64) -> Result<Box<dyn Problem>, ExperimentError> {
        let p = &self.problem;
        let data_seed = sub_seed(seed, 1);
        let matrix = || -> Result<DenseMatrix, ProblemError> {
            match &p.data {
                Some(path) => load_csv(path),
                None => synth_lowrank(p.rows, p.cols, p.rank, data_seed),
            }
        };
        Ok(match p.kind {
            ProblemKind::Quadratic => {
                if p.dim == 0 {
                    return Err(ExperimentError::Config(
                        "quadratic dim must be positive".into(),
                    ));
                }
                Box::new(
                    Quadratic::with_curvature(p.dim, p.curvature).with_init_radius(p.init_radius),
                )
            }
            ProblemKind::Dictlearn => Box::new(DictLearnProblem::new(matrix()?, p.lambda, p.rank)?),
            ProblemKind::Dnmf | ProblemKind::NoisyDnmf => {
                let input = matrix()?.map(f64::abs);
                let dnmf = DnmfProblem::new(input, p.layers.clone(), p.penalty)?;
                if p.kind == ProblemKind::NoisyDnmf {
                    Box::new(dnmf.noisy(sub_seed(seed, 3)))
                } else {
                    Box::new(dnmf)
                }
            }
            ProblemKind::Logreg => Box::new(match &p.data {
                Some(path) => load_logreg_csv(path, p.l2_reg)?,
                None => synth_logreg(p.samples, p.features, p.l2_reg, data_seed)?,
            }),
        })
    }
}

/// Independent seed for one role (data, start, noise) of a run seed.
pub fn sub_seed(seed: u64, role: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(role);
    rng.next_u64()
}

pub fn trace_file_name(kind: OptimizerKind, seed: u64, format: TraceFormat) -> String {
    format!("trace_{}_seed{seed}.{}", kind.as_str(), format.extension())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub path: PathBuf,
    /// Failure message; the trace then holds the iterates before the failure.
    pub error: Option<String>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunOutcome>,
    pub summary: Vec<SummaryRow>,
    pub summary_path: PathBuf,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &RunOutcome> {
        self.runs.iter().filter(|r| r.error.is_some())
    }

    pub fn all_failed(&self) -> bool {
        self.runs.iter().all(|r| r.error.is_some())
    }
}

/// Runs the full grid and writes traces, `summary.<ext>` and `timing.csv`
/// into `cfg.output_dir`, creating it if needed. A failing run is recorded
/// and the remaining runs still execute.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)
        .map_err(|e| ExperimentError::Io(format!("{}: {e}", dir.display())))?;

    let opts = cfg.run_options();
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let problem = cfg.build_problem(seed)?;
        let x0 = problem.initial_point(sub_seed(seed, 2));
        let home = cfg.home_config(seed);
        for &kind in &cfg.optimizers {
            let result = if kind == OptimizerKind::Admm {
                run_admm(&dictlearn_instance(cfg, seed)?, cfg.iters, &x0, &opts)
            } else {
                run_with(problem.as_ref(), kind, &home, &x0, &opts)
            };
            let (record, error) = match result {
                Ok(r) => (r, None),
                Err(e) => {
                    let msg = e.to_string();
                    (*e.partial, Some(msg))
                }
            };
            let path = dir.join(trace_file_name(kind, seed, cfg.format));
            write_file(&path, &write_trace(&record, cfg.format)?)?;
            runs.push(RunOutcome {
                optimizer: kind,
                seed,
                path,
                error,
                wall_time: record.wall_time,
            });
        }
    }

    let mut traces = Vec::with_capacity(runs.len());
    for r in &runs {
        traces.push(TraceEntry {
            optimizer: r.optimizer,
            seed: r.seed,
            record: load_trace(&r.path)?,
        });
    }
    let summary = summarize_traces(&cfg.optimizers, &traces, cfg.iters, 0.0);
    let summary_path = dir.join(format!("summary.{}", cfg.format.extension()));
    write_file(&summary_path, &write_summary(&summary, cfg.format))?;

    let mut timing = String::from("optimizer,seed,wall_time_seconds\n");
    for r in &runs {
        writeln!(timing, "{},{},{:.6}", r.optimizer, r.seed, r.wall_time)
            .expect("writing to a String");
    }
    write_file(&dir.join("timing.csv"), &timing)?;

    Ok(ExperimentOutcome {
        runs,
        summary,
        summary_path,
    })
}

fn dictlearn_instance(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<DictLearnProblem, ExperimentError> {
    let p = &cfg.problem;
    let input = match &p.data {
        Some(path) => load_csv(path)?,
        None => synth_lowrank(p.rows, p.cols, p.rank, sub_seed(seed, 1))?,
    };
    Ok(DictLearnProblem::new(input, p.lambda, p.rank)?)
}

fn write_file(path: &Path, text: &str) -> Result<(), ExperimentError> {
    std::fs::write(path, text).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub record: RunRecord,
}

/// Per-optimizer statistics over seeds. Quantiles and means cover the
/// completed runs only; `None` marks a statistic with too few runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub optimizer: OptimizerKind,
    pub runs: usize,
    pub failed: usize,
    pub final_loss_median: Option<f64>,
    pub final_loss_q25: Option<f64>,
    pub final_loss_q75: Option<f64>,
    pub final_loss_min: Option<f64>,
    pub final_loss_max: Option<f64>,
    pub randomization_events_mean: Option<f64>,
    /// Median over runs of the log-log slope over iterations `1..=T`.
    pub rate_slope_median: Option<f64>,
    /// One-way ICC with seeds as groups and the losses at `T/4, T/2, 3T/4, T`
    /// as repeated measurements.
    pub icc: Option<f64>,
}

/// Iterations at which the ICC samples each run.
pub fn icc_checkpoints(iters: usize) -> Vec<usize> {
    let mut points: Vec<usize> = (1..=4)
        .map(|k| (k * iters).div_ceil(4))
        .filter(|&t| t > 0)
        .collect();
    points.dedup();
    points
}

/// Pure function of the traces: a run counts as failed when its trace is
/// shorter than `iters + 1` rows.
pub fn summarize_traces(
    optimizers: &[OptimizerKind],
    traces: &[TraceEntry],
    iters: usize,
    floor: f64,
) -> Vec<SummaryRow> {
    let checkpoints = icc_checkpoints(iters);
    optimizers
        .iter()
        .map(|&kind| {
            let mine: Vec<&TraceEntry> = traces.iter().filter(|e| e.optimizer == kind).collect();
            let done: Vec<&RunRecord> = mine
                .iter()
                .map(|e| &e.record)
                .filter(|r| r.losses.len() == iters + 1)
                .collect();
            let finals: Vec<f64> = done.iter().filter_map(|r| r.final_loss()).collect();
            let stat = |p: f64| (!finals.is_empty()).then(|| quantile(&finals, p));
            let mut slopes: Vec<f64> = done
                .iter()
                .filter_map(|r| rate_slope(&r.losses, floor, 1..=iters).ok())
                .collect();
            slopes.retain(|s| s.is_finite());
            let events_mean = (!done.is_empty()).then(|| {
                done.iter()
                    .map(|r| r.randomization_events.len() as f64)
                    .sum::<f64>()
                    / done.len() as f64
            });
            let icc = if checkpoints.len() >= 2 && done.len() >= 2 {
                let data: Vec<Vec<f64>> = done
                    .iter()
                    .map(|r| checkpoints.iter().map(|&t| r.losses[t]).collect())
                    .collect();
                DenseMatrix::from_rows(&data)
                    .ok()
                    .and_then(|m| icc_oneway(&m).ok())
                    .map(|rep| rep.icc)
                    .filter(|v| v.is_finite())
            } else {
                None
            };
            SummaryRow {
                optimizer: kind,
                runs: mine.len(),
                failed: mine.len() - done.len(),
                final_loss_median: stat(0.5),
                final_loss_q25: stat(0.25),
                final_loss_q75: stat(0.75),
                final_loss_min: stat(0.0),
                final_loss_max: stat(1.0),
                randomization_events_mean: events_mean,
                rate_slope_median: (!slopes.is_empty()).then(|| quantile(&slopes, 0.5)),
                icc,
            }
        })
        .collect()
}

pub const SUMMARY_HEADER: &str = "optimizer,runs,failed,final_loss_median,final_loss_q25,final_loss_q75,final_loss_min,final_loss_max,randomization_events_mean,rate_slope_median,icc";

pub fn write_summary(rows: &[SummaryRow], format: TraceFormat) -> String {
    match format {
        TraceFormat::Json => {
            let mut s = serde_json::to_string_pretty(rows).expect("summary rows serialize");
            s.push('\n');
            s
        }
        TraceFormat::Csv => {
            let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
            let mut out = format!("{SUMMARY_HEADER}\n");
            for r in rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    r.optimizer,
                    r.runs,
                    r.failed,
                    opt(r.final_loss_median),
                    opt(r.final_loss_q25),
                    opt(r.final_loss_q75),
                    opt(r.final_loss_min),
                    opt(r.final_loss_max),
                    opt(r.randomization_events_mean),
                    opt(r.rate_slope_median),
                    opt(r.icc)
                )
                .expect("writing to a String");
            }
            out
        }
    }
}
