//! Run traces and the statistics computed over them: log-log convergence
//! slopes, one-way ICC, and aggregate summaries.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("window {start}..={end} needs at least 3 points starting at index >= 1")]
    Window { start: usize, end: usize },
    #[error("window ends at {end} but the trace has {len} points")]
    OutOfRange { end: usize, len: usize },
    #[error("loss {value} at index {index} is not above the floor {floor}")]
    BelowFloor {
        index: usize,
        value: f64,
        floor: f64,
    },
    #[error("ICC needs at least 2 groups and 2 measurements per group, got {groups}x{raters}")]
    IccShape { groups: usize, raters: usize },
    #[error("cannot summarize an empty list of runs")]
    NoRuns,
    #[error("inconsistent trace: {0}")]
    Trace(String),
}

/// Per-iteration trace of one optimizer run.
///
/// Index `t` of `losses`, `grad_norms` and `moment_gaps` refers to iterate
/// `x_t`; index 0 is the starting point, whose moment gap is recorded as 0.
/// `grad_norms[t]` is `‖∇f(x_t)‖∞`. `randomization_events` lists the
/// iterates that were produced by a coordinate permutation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunRecord {
    pub losses: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub moment_gaps: Vec<f64>,
    pub randomization_events: Vec<usize>,
    /// Seconds; not part of the trajectory and ignored by `==`.
    #[serde(default)]
    pub wall_time: f64,
}

impl PartialEq for RunRecord {
    fn eq(&self, other: &Self) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        bits(&self.losses) == bits(&other.losses)
            && bits(&self.grad_norms) == bits(&other.grad_norms)
            && bits(&self.moment_gaps) == bits(&other.moment_gaps)
            && self.randomization_events == other.randomization_events
    }
}

impl RunRecord {
    /// Number of completed steps.
    pub fn iterations(&self) -> usize {
        self.losses.len().saturating_sub(1)
    }

    pub fn initial_loss(&self) -> Option<f64> {
        self.losses.first().copied()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }

    pub fn randomized_at(&self, t: usize) -> bool {
        self.randomization_events.binary_search(&t).is_ok()
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        let n = self.losses.len();
        if n == 0 {
            return Err(AnalysisError::Trace("no losses recorded".into()));
        }
        if self.grad_norms.len() != n || self.moment_gaps.len() != n {
            return Err(AnalysisError::Trace(format!(
                "column lengths differ: {} losses, {} grad norms, {} moment gaps",
                n,
                self.grad_norms.len(),
                self.moment_gaps.len()
            )));
        }
        if let Some(i) = self.losses.iter().position(|v| !v.is_finite()) {
            return Err(AnalysisError::Trace(format!(
                "non-finite loss at iteration {i}"
            )));
        }
        if self.randomization_events.windows(2).any(|w| w[0] >= w[1])
            || self.randomization_events.iter().any(|&t| t == 0 || t >= n)
        {
            return Err(AnalysisError::Trace(
                "randomization events must be increasing iterations in 1..=T".into(),
            ));
        }
        Ok(())
    }
}

/// Least-squares slope of `ln(loss_t − floor)` against `ln t` over `window`.
pub fn rate_slope(
    losses: &[f64],
    floor: f64,
    window: RangeInclusive<usize>,
) -> Result<f64, AnalysisError> {
    let (start, end) = (*window.start(), *window.end());
    if start == 0 || end < start + 2 {
        return Err(AnalysisError::Window { start, end });
    }
    if end >= losses.len() {
        return Err(AnalysisError::OutOfRange {
            end,
            len: losses.len(),
        });
    }
    let mut xs = Vec::with_capacity(end - start + 1);
    let mut ys = Vec::with_capacity(end - start + 1);
    for t in window {
        let gap = losses[t] - floor;
        if gap.is_nan() || gap <= 0.0 {
            return Err(AnalysisError::BelowFloor {
                index: t,
                value: losses[t],
                floor,
            });
        }
        xs.push((t as f64).ln());
        ys.push(gap.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Early large-gradient phase: iterations `1..=e` where `e` is the last index
/// in the first half of the run before `grad_norms` first drops to
/// `threshold` or below. `None` when that leaves fewer than 3 points.
pub fn early_phase_window(grad_norms: &[f64], threshold: f64) -> Option<RangeInclusive<usize>> {
    let iters = grad_norms.len().checked_sub(1)?;
    let half = iters / 2;
    let mut end = 0;
    for (t, &g) in grad_norms.iter().enumerate().take(half + 1).skip(1) {
        if g <= threshold {
            break;
        }
        end = t;
    }
    (end >= 3).then_some(1..=end)
}

/// One-way random-effects ICC(1,1) and its mean squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccReport {
    pub icc: f64,
    pub ms_between: f64,
    pub ms_within: f64,
    pub groups: usize,
    pub raters_per_group: usize,
    /// All values identical; the ICC is reported as 1 by convention.
    pub degenerate: bool,
}

/// ICC(1,1) of a `groups × raters` table via one-way ANOVA:
/// `(MSB − MSW) / (MSB + (k − 1)·MSW)`.
pub fn icc_oneway(data: &DenseMatrix) -> Result<IccReport, AnalysisError> {
    let (n, k) = data.shape();
    if n < 2 || k < 2 {
        return Err(AnalysisError::IccShape {
            groups: n,
            raters: k,
        });
    }
    let grand = data.as_slice().iter().sum::<f64>() / (n * k) as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for i in 0..n {
        let row = data.row(i);
        let mean = row.iter().sum::<f64>() / k as f64;
        ss_between += k as f64 * (mean - grand) * (mean - grand);
        ss_within += row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    }
    let ms_between = ss_between / (n - 1) as f64;
    let ms_within = ss_within / (n * (k - 1)) as f64;
    let denom = ms_between + (k - 1) as f64 * ms_within;
    let degenerate = denom == 0.0;
    let icc = if degenerate {
        1.0
    } else {
        (ms_between - ms_within) / denom
    };
    Ok(IccReport {
        icc,
        ms_between,
        ms_within,
        groups: n,
        raters_per_group: k,
        degenerate,
    })
}

/// Linear-interpolation quantile (the "type 7" rule) of unsorted data.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty() && (0.0..=1.0).contains(&p));
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_mean(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub final_loss_median: f64,
    pub final_loss_q25: f64,
    pub final_loss_q75: f64,
    pub final_loss_min: f64,
    pub final_loss_max: f64,
    pub randomization_events_total: usize,
    pub randomization_events_mean: f64,
    pub wall_time_mean: f64,
    pub wall_time_median: f64,
    pub wall_time_max: f64,
}

/// Aggregates over a set of runs. The result does not depend on the order of
/// `records`.
pub fn summarize(records: &[RunRecord]) -> Result<Summary, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::NoRuns);
    }
    let finals: Vec<f64> = records
        .iter()
        .map(|r| {
            r.final_loss()
                .ok_or_else(|| AnalysisError::Trace("empty run".into()))
        })
        .collect::<Result<_, _>>()?;
    let events: Vec<usize> = records
        .iter()
        .map(|r| r.randomization_events.len())
        .collect();
    let times: Vec<f64> = records.iter().map(|r| r.wall_time).collect();
    let total: usize = events.iter().sum();
    Ok(Summary {
        runs: records.len(),
        final_loss_median: quantile(&finals, 0.5),
        final_loss_q25: quantile(&finals, 0.25),
        final_loss_q75: quantile(&finals, 0.75),
        final_loss_min: quantile(&finals, 0.0),
        final_loss_max: quantile(&finals, 1.0),
        randomization_events_total: total,
        randomization_events_mean: total as f64 / records.len() as f64,
        wall_time_mean: sorted_mean(&times),
        wall_time_median: quantile(&times, 0.5),
        wall_time_max: quantile(&times, 1.0),
    })
}
