//! High-order momentum optimization (HOME-3) with baselines, benchmark
//! problems, and the analysis tools used to check its behaviour.
//!
//! Modules, bottom-up:
//!
//! - [`tensor`]: dense vectors and row-major matrices.
//! - [`randomization`]: seeded coordinate permutations.
//! - [`optim`]: HOME-3, Adam, momentum SGD and STORM step functions.
//! - [`problems`]: quadratic, dictionary learning, (noisy) deep nonlinear
//!   matrix factorization, logistic regression, and the ADMM baseline.
//! - [`runner`]: fixed-horizon runs producing [`analysis::RunRecord`] traces.
//! - [`analysis`]: convergence slopes, ICC, summaries.
//! - [`trace`]: CSV/JSON trace formats.
//! - [`experiment`]: config files and optimizer × seed grids.
//! - [`acceptance`]: the end-to-end acceptance checks.

pub mod acceptance;
pub mod analysis;
pub mod experiment;
pub mod optim;
pub mod problems;
pub mod randomization;
pub mod runner;
pub mod tensor;
pub mod trace;

pub use analysis::{icc_oneway, rate_slope, summarize, IccReport, RunRecord, Summary};
pub use experiment::{run_experiment, ExperimentConfig, Overrides};
pub use optim::{
    adam_step, adaptive_lr, disable_third_moment, home3_step, momentum_sgd_step, storm_step,
    HomeConfig, MomentState, StepReport,
};
pub use problems::Problem;
pub use randomization::{coordinate_randomize, operator_norm_estimate, PermutationSource};
pub use runner::{run, run_with, OptimizerKind, RunError, RunOptions};
pub use tensor::{DenseMatrix, DenseVector};
pub use trace::TraceFormat;
