//! Drives a step-based optimizer over a [`Problem`] for a fixed horizon and
//! records the trace.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::RunRecord;
use crate::optim::{
    adam_step, home3_step, momentum_sgd_step, storm_step, HomeConfig, MomentState, OptimError,
    StepReport,
};
use crate::problems::{admm_lasso, least_squares_factor, DictLearnProblem, Problem, ProblemError};
use crate::randomization::{coordinate_randomize, PermutationSource};
use crate::tensor::DenseVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Home3,
    Adam,
    MomentumSgd,
    Storm,
    /// Alternating least-squares dictionary / ADMM codes. Dictionary
    /// learning only.
    Admm,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 5] = [
        Self::Home3,
        Self::Adam,
        Self::MomentumSgd,
        Self::Storm,
        Self::Admm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Home3 => "home3",
            Self::Adam => "adam",
            Self::MomentumSgd => "momentum-sgd",
            Self::Storm => "storm",
            Self::Admm => "admm",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown optimizer {s:?} (expected one of home3, adam, momentum-sgd, storm, admm)"))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepFailure {
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("{0}")]
    Unsupported(String),
}

/// A failed run: the iteration at which it stopped, the cause, and the
/// trace up to the last good iterate.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("run failed at iteration {iteration}: {source}")]
pub struct RunError {
    pub iteration: usize,
    pub source: StepFailure,
    pub partial: Box<RunRecord>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Additionally permute the iterate after every `n`-th step, regardless
    /// of the moment gap.
    pub forced_randomization_period: Option<usize>,
    /// Inner ADMM iterations per outer step for [`OptimizerKind::Admm`].
    pub admm_inner_iters: usize,
}

impl RunOptions {
    pub fn new() -> Self {
        Self {
            forced_randomization_period: None,
            admm_inner_iters: 10,
        }
    }
}

pub fn run(
    problem: &dyn Problem,
    kind: OptimizerKind,
    cfg: &HomeConfig,
    x0: &DenseVector,
) -> Result<RunRecord, RunError> {
    run_with(problem, kind, cfg, x0, &RunOptions::new())
}

/// Runs exactly `cfg.max_iters` steps from `x0`. The result is a pure
/// function of `(problem, kind, cfg, x0, opts)` apart from `wall_time`.
pub fn run_with(
    problem: &dyn Problem,
    kind: OptimizerKind,
    cfg: &HomeConfig,
    x0: &DenseVector,
    opts: &RunOptions,
) -> Result<RunRecord, RunError> {
    let started = Instant::now();
    let mut rec = RunRecord::default();
    let fail = |iteration: usize, source: StepFailure, rec: &RunRecord| RunError {
        iteration,
        source,
        partial: Box::new(RunRecord {
            wall_time: started.elapsed().as_secs_f64(),
            ..truncated(rec)
        }),
    };
    if kind == OptimizerKind::Admm {
        return Err(fail(
            0,
            StepFailure::Unsupported(
                "ADMM runs need a dictionary-learning problem; use run_admm".into(),
            ),
            &rec,
        ));
    }
    if let Err(e) = cfg.validate() {
        return Err(fail(0, e.into(), &rec));
    }
    if x0.dim() != problem.dim() {
        let e = ProblemError::Dimension {
            expected: problem.dim(),
            got: x0.dim(),
        };
        return Err(fail(0, e.into(), &rec));
    }

    let mut x = x0.clone();
    let mut state = MomentState::new(x.dim()).map_err(|e| fail(0, e.into(), &rec))?;
    let mut src = PermutationSource::new(cfg.seed);
    let mut prev_x: Option<DenseVector> = None;

    let initial = checked_loss(problem, &x, 0).map_err(|e| fail(0, e, &rec))?;
    rec.losses.push(initial);
    rec.moment_gaps.push(0.0);

    for t in 0..cfg.max_iters {
        let (_, g) = problem
            .value_and_grad(&x, t as u64)
            .map_err(|e| fail(t, e.into(), &rec))?;
        rec.grad_norms.push(g.norm_inf());
        let step: Result<StepReport, StepFailure> = match kind {
            OptimizerKind::Home3 => {
                home3_step(&x, &g, &mut state, cfg, &mut src).map_err(Into::into)
            }
            OptimizerKind::Adam => adam_step(&x, &g, &mut state, cfg).map_err(Into::into),
            OptimizerKind::MomentumSgd => {
                momentum_sgd_step(&x, &g, &mut state, cfg).map_err(Into::into)
            }
            OptimizerKind::Storm => {
                let g_prev = match &prev_x {
                    Some(px) => problem
                        .value_and_grad(px, t as u64)
                        .map(|(_, gp)| gp)
                        .map_err(StepFailure::from),
                    None => Ok(g.clone()),
                };
                g_prev.and_then(|gp| storm_step(&x, &g, &gp, &mut state, cfg).map_err(Into::into))
            }
            OptimizerKind::Admm => unreachable!("rejected above"),
        };
        let report = step.map_err(|e| fail(t + 1, e, &rec))?;
        let mut randomized = report.randomized;
        let mut next = report.new_x;
        if let Some(period) = opts.forced_randomization_period {
            if period > 0 && (t + 1) % period == 0 && !randomized {
                next = coordinate_randomize(&next, &mut src);
                randomized = true;
            }
        }
        let loss = checked_loss(problem, &next, t + 1).map_err(|e| fail(t + 1, e, &rec))?;
        prev_x = Some(std::mem::replace(&mut x, next));
        rec.losses.push(loss);
        rec.moment_gaps.push(report.moment_gap);
        if randomized {
            rec.randomization_events.push(t + 1);
        }
    }
    let (_, g) = problem
        .value_and_grad(&x, cfg.max_iters as u64)
        .map_err(|e| fail(cfg.max_iters, e.into(), &rec))?;
    rec.grad_norms.push(g.norm_inf());
    rec.wall_time = started.elapsed().as_secs_f64();
    Ok(rec)
}

/// Cuts an interrupted trace back to the iterates that have a loss, a
/// moment gap and a gradient norm.
fn truncated(rec: &RunRecord) -> RunRecord {
    let n = rec
        .losses
        .len()
        .min(rec.grad_norms.len())
        .min(rec.moment_gaps.len());
    RunRecord {
        losses: rec.losses[..n].to_vec(),
        grad_norms: rec.grad_norms[..n].to_vec(),
        moment_gaps: rec.moment_gaps[..n].to_vec(),
        randomization_events: rec
            .randomization_events
            .iter()
            .copied()
            .filter(|&t| t < n)
            .collect(),
        wall_time: rec.wall_time,
    }
}

fn checked_loss(
    problem: &dyn Problem,
    x: &DenseVector,
    iteration: usize,
) -> Result<f64, StepFailure> {
    let loss = problem.loss(x)?;
    if !loss.is_finite() {
        return Err(OptimError::NonFinite {
            iteration,
            what: "loss",
            coordinate: 0,
            value: loss,
        }
        .into());
    }
    Ok(loss)
}

/// Alternating baseline for dictionary learning: each outer step refits the
/// dictionary by ridge least squares and then the codes by ADMM.
pub fn run_admm(
    problem: &DictLearnProblem,
    max_iters: usize,
    x0: &DenseVector,
    opts: &RunOptions,
) -> Result<RunRecord, RunError> {
    let started = Instant::now();
    let mut rec = RunRecord::default();
    let fail = |iteration: usize, source: StepFailure, rec: &RunRecord| RunError {
        iteration,
        source,
        partial: Box::new(truncated(rec)),
    };
    let (mut dict, mut codes) = problem.split(x0).map_err(|e| fail(0, e.into(), &rec))?;
    let inner = opts.admm_inner_iters.max(1);
    let grad_norm = |d: &_, c: &_| -> Result<f64, StepFailure> {
        let eval = problem.evaluate(d, c)?;
        Ok(eval
            .grad_x
            .as_slice()
            .iter()
            .chain(eval.grad_y.as_slice())
            .fold(0.0_f64, |a, v| a.max(v.abs())))
    };
    rec.losses.push(
        problem
            .reconstruction_loss(&dict, &codes)
            .map_err(|e| fail(0, e.into(), &rec))?,
    );
    rec.moment_gaps.push(0.0);
    for t in 0..max_iters {
        rec.grad_norms
            .push(grad_norm(&dict, &codes).map_err(|e| fail(t, e, &rec))?);
        let ridge = 1e-8 * codes.frobenius_norm().powi(2).max(1.0);
        let step = least_squares_factor(problem.input(), &codes, ridge).and_then(|d| {
            let res = admm_lasso(
                &d,
                problem.input(),
                problem.lambda(),
                crate::problems::admm::DEFAULT_RHO,
                inner,
            )?;
            Ok((d, res))
        });
        let (d, res) = step.map_err(|e| fail(t + 1, e.into(), &rec))?;
        dict = d;
        codes = res.codes;
        let loss = problem
            .reconstruction_loss(&dict, &codes)
            .map_err(|e| fail(t + 1, e.into(), &rec))?;
        rec.losses.push(loss);
        rec.moment_gaps
            .push(*res.primal_residuals.last().expect("inner >= 1"));
    }
    rec.grad_norms
        .push(grad_norm(&dict, &codes).map_err(|e| fail(max_iters, e, &rec))?);
    rec.wall_time = started.elapsed().as_secs_f64();
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{synth_lowrank, Quadratic};

    fn cfg(t: usize) -> HomeConfig {
        HomeConfig {
            max_iters: t,
            ..HomeConfig::default()
        }
    }

    #[test]
    fn empty_run_has_initial_loss_only() {
        let q = Quadratic::new(4);
        let x0 = q.initial_point(0);
        let rec = run(&q, OptimizerKind::Home3, &cfg(0), &x0).unwrap();
        assert_eq!(rec.losses.len(), 1);
        assert_eq!(rec.grad_norms.len(), 1);
        assert_eq!(rec.iterations(), 0);
        rec.validate().unwrap();
    }

    #[test]
    fn runs_are_deterministic() {
        let q = Quadratic::new(8);
        let x0 = q.initial_point(3);
        let c = HomeConfig {
            randomize: true,
            seed: 5,
            ..cfg(200)
        };
        for kind in [
            OptimizerKind::Home3,
            OptimizerKind::Adam,
            OptimizerKind::MomentumSgd,
            OptimizerKind::Storm,
        ] {
            let a = run(&q, kind, &c, &x0).unwrap();
            let b = run(&q, kind, &c, &x0).unwrap();
            assert_eq!(a, b, "{kind}");
            assert_eq!(a.losses.len(), 201);
            a.validate().unwrap();
        }
    }

    #[test]
    fn home3_descends_on_small_quadratic_like_gradient_descent() {
        let q = Quadratic::new(16);
        let x0 = q.initial_point(1);
        assert!(x0.norm_inf() < 1.0);
        let c = cfg(500);
        let rec = run(&q, OptimizerKind::Home3, &c, &x0).unwrap();
        let final_norm = (2.0 * rec.final_loss().unwrap()).sqrt();
        assert!(final_norm < x0.norm_l2());

        // plain gradient descent on the same schedule heads into the same basin
        let mut x = x0.clone();
        for t in 0..500 {
            let lr = crate::optim::adaptive_lr(t, &c).unwrap();
            x = x.map(|v| v - lr * v);
        }
        assert!(x.norm_l2() < x0.norm_l2());
    }

    #[test]
    fn forced_randomization_is_recorded() {
        let q = Quadratic::new(6);
        let x0 = q.initial_point(0);
        let opts = RunOptions {
            forced_randomization_period: Some(25),
            ..RunOptions::new()
        };
        let rec = run_with(&q, OptimizerKind::Home3, &cfg(100), &x0, &opts).unwrap();
        assert_eq!(rec.randomization_events, vec![25, 50, 75, 100]);
    }

    #[test]
    fn overflow_aborts_with_partial_trace() {
        let q = Quadratic::new(2);
        let x0 = DenseVector::new(vec![1e120, 1.0]).unwrap();
        let err = run(&q, OptimizerKind::Home3, &cfg(10), &x0).unwrap_err();
        assert!(matches!(
            err.source,
            StepFailure::Optim(OptimError::NonFinite { .. })
        ));
        assert_eq!(err.iteration, 1);
        assert_eq!(err.partial.losses.len(), 1);
        assert_eq!(err.partial.grad_norms, vec![1e120]);
    }

    #[test]
    fn dimension_and_config_errors() {
        let q = Quadratic::new(2);
        let x0 = DenseVector::new(vec![1.0]).unwrap();
        assert!(run(&q, OptimizerKind::Adam, &cfg(3), &x0).is_err());
        let bad = HomeConfig {
            beta3: 0.5,
            ..cfg(3)
        };
        let x0 = q.initial_point(0);
        assert!(matches!(
            run(&q, OptimizerKind::Home3, &bad, &x0).unwrap_err().source,
            StepFailure::Optim(OptimError::InvalidConfig(_))
        ));
        assert!(run(&q, OptimizerKind::Admm, &cfg(3), &x0).is_err());
    }

    #[test]
    fn admm_baseline_reduces_reconstruction_loss() {
        let input = synth_lowrank(12, 15, 3, 2).unwrap();
        let p = DictLearnProblem::new(input, 0.01, 3).unwrap();
        let x0 = p.initial_point(0);
        let rec = run_admm(&p, 20, &x0, &RunOptions::new()).unwrap();
        rec.validate().unwrap();
        assert_eq!(rec.losses.len(), 21);
        assert!(rec.final_loss().unwrap() < 0.5 * rec.initial_loss().unwrap());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in OptimizerKind::ALL {
            assert_eq!(k.as_str().parse::<OptimizerKind>().unwrap(), k);
        }
        assert!("sgd".parse::<OptimizerKind>().is_err());
    }
}
