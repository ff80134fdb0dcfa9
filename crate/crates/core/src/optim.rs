//! HOME-3 and the baseline optimizers, all as single-step functions over an
//! explicit moment state.
//!
//! Every step takes the current iterate `x`, the gradient `g` at `x`, and the
//! caller-owned state; it returns the next iterate without touching the state
//! unless the step succeeds. The step index used for the schedule and the bias
//! correction is `state.t` before the call; the state's counter is incremented
//! on success.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::randomization::{coordinate_randomize, PermutationSource};
use crate::tensor::{DenseVector, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: iterate has {x}, gradient has {g}, state has {state}")]
    Dimension { x: usize, g: usize, state: usize },
    #[error("iteration {t} is past the configured horizon of {max_iters} steps")]
    RunComplete { t: usize, max_iters: usize },
    #[error("non-finite {what} at iteration {iteration}, coordinate {coordinate}: {value}")]
    NonFinite {
        iteration: usize,
        what: &'static str,
        coordinate: usize,
        value: f64,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Hyperparameters shared by all step functions.
///
/// Defaults follow the HOME-3 reference setting: `base_lr = 0.001`,
/// `β = (0.9, 0.999, 0.99)`, `ε₁ = ε₂ = 1e-8`, schedule
/// `base_lr · (1 − t/T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HomeConfig {
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub max_iters: usize,
    /// Apply coordinate randomization when the moment gap drops below `eps2`.
    pub randomize: bool,
    pub seed: u64,
    /// Power of the gradient feeding the high-order channel (3 for HOME-3).
    pub power: u32,
    /// When false the high-order channel stays identically zero.
    pub third_moment: bool,
    /// Optional componentwise clip `|g_i| <= bound` applied before the
    /// moments are updated. Off unless set explicitly.
    pub grad_clip: Option<f64>,
    /// STORM momentum parameter `a` in `d ← g + (1 − a)(d − g_prev)`.
    pub storm_momentum: f64,
}

impl Default for HomeConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            beta3: 0.99,
            eps1: 1e-8,
            eps2: 1e-8,
            max_iters: 100,
            randomize: false,
            seed: 0,
            power: 3,
            third_moment: true,
            grad_clip: None,
            storm_momentum: 0.1,
        }
    }
}

impl HomeConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |msg: String| Err(OptimError::InvalidConfig(msg));
        for (name, b) in [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("beta3", self.beta3),
        ] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} = {b} must lie in (0, 1)"));
            }
        }
        if !(self.beta1 < self.beta3 && self.beta3 < self.beta2) {
            return bad(format!(
                "decay rates must satisfy beta1 < beta3 < beta2, got {} / {} / {}",
                self.beta1, self.beta3, self.beta2
            ));
        }
        for (name, v) in [
            ("base_lr", self.base_lr),
            ("eps1", self.eps1),
            ("eps2", self.eps2),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be positive and finite"));
            }
        }
        if self.power == 0 {
            return bad("power must be at least 1".into());
        }
        if let Some(c) = self.grad_clip {
            if c.is_nan() || c <= 0.0 {
                return bad(format!("grad_clip = {c} must be positive"));
            }
        }
        if !(self.storm_momentum > 0.0 && self.storm_momentum <= 1.0) {
            return bad(format!(
                "storm_momentum = {} must lie in (0, 1]",
                self.storm_momentum
            ));
        }
        Ok(())
    }
}

/// Copy of `cfg` whose high-order channel is identically zero, which turns
/// [`home3_step`] into the Adam update.
pub fn disable_third_moment(cfg: &HomeConfig) -> HomeConfig {
    HomeConfig {
        third_moment: false,
        ..cfg.clone()
    }
}

/// `base_lr · (1 − t/T)` for `0 <= t < T`.
pub fn adaptive_lr(t: usize, cfg: &HomeConfig) -> Result<f64, OptimError> {
    if t >= cfg.max_iters {
        return Err(OptimError::RunComplete {
            t,
            max_iters: cfg.max_iters,
        });
    }
    Ok(cfg.base_lr * (1.0 - t as f64 / cfg.max_iters as f64))
}

/// First, second and high-order moment accumulators plus the step counter.
///
/// Baselines reuse `m` for their single buffer (heavy-ball velocity for
/// momentum SGD, the recursive estimator `d` for STORM).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub t: usize,
    pub m: DenseVector,
    pub v: DenseVector,
    pub s: DenseVector,
}

impl MomentState {
    pub fn new(dim: usize) -> Result<Self, OptimError> {
        let zeros = DenseVector::zeros(dim)?;
        Ok(Self {
            t: 0,
            m: zeros.clone(),
            v: zeros.clone(),
            s: zeros,
        })
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    /// Bias-corrected `(M̂, V̂, Ŝ)` at the current counter. At `t = 0` the
    /// state is all zeros and so are the views.
    pub fn bias_corrected(&self, cfg: &HomeConfig) -> (DenseVector, DenseVector, DenseVector) {
        if self.t == 0 {
            return (self.m.clone(), self.v.clone(), self.s.clone());
        }
        let t = self.t as i32;
        (
            self.m.scale(1.0 / (1.0 - cfg.beta1.powi(t))),
            self.v.scale(1.0 / (1.0 - cfg.beta2.powi(t))),
            self.s.scale(1.0 / (1.0 - cfg.beta3.powi(t))),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub new_x: DenseVector,
    /// `‖g‖∞` of the gradient passed in.
    pub grad_norm: f64,
    /// `‖M̂ − Ŝ‖₂` for HOME, the norm of the update buffer for the baselines.
    pub moment_gap: f64,
    pub randomized: bool,
}

/// One HOME-n step:
///
/// ```text
/// M ← β₁M + (1−β₁)g      V ← β₂V + (1−β₂)g²      S ← β₃S + (1−β₃)gⁿ
/// x ← x − α_t (M̂ − Ŝ) / (√V̂ + ε₁)
/// ```
///
/// and, when randomization is enabled and `‖M̂ − Ŝ‖ < ε₂`, the new iterate
/// is replaced by a random permutation of its coordinates. Moments are not
/// touched by the permutation.
pub fn home3_step(
    x: &DenseVector,
    g: &DenseVector,
    state: &mut MomentState,
    cfg: &HomeConfig,
    src: &mut PermutationSource,
) -> Result<StepReport, OptimError> {
    check_dims(x, g, state)?;
    let lr = adaptive_lr(state.t, cfg)?;
    let iteration = state.t + 1;
    let g = clipped(g, cfg);
    let grad_norm = g.norm_inf();

    let gn = if cfg.third_moment {
        Some(
            g.elementwise_pow(cfg.power)
                .map_err(|e| non_finite(e, iteration, "gradient power"))?,
        )
    } else {
        None
    };

    let ti = iteration as i32;
    let c1 = 1.0 - cfg.beta1.powi(ti);
    let c2 = 1.0 - cfg.beta2.powi(ti);
    let c3 = 1.0 - cfg.beta3.powi(ti);

    let d = x.dim();
    let mut m = state.m.clone();
    let mut v = state.v.clone();
    let mut s = state.s.clone();
    let mut new_x = x.clone();
    let mut diff = Vec::with_capacity(d);
    for i in 0..d {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * (g[i] * g[i]);
        if let Some(gn) = &gn {
            s[i] = cfg.beta3 * s[i] + (1.0 - cfg.beta3) * gn[i];
        }
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        let s_hat = if gn.is_some() { s[i] / c3 } else { 0.0 };
        let delta = m_hat - s_hat;
        new_x[i] = x[i] - lr * delta / (v_hat.sqrt() + cfg.eps1);
        diff.push(delta);
    }
    let moment_gap = DenseVector::new(diff)?.norm_l2();

    for (what, vec) in [
        ("first moment", &m),
        ("second moment", &v),
        ("third moment", &s),
        ("iterate", &new_x),
    ] {
        vec.check_finite()
            .map_err(|e| non_finite(e, iteration, what))?;
    }
    if !moment_gap.is_finite() {
        return Err(OptimError::NonFinite {
            iteration,
            what: "moment gap",
            coordinate: 0,
            value: moment_gap,
        });
    }

    let randomized = cfg.randomize && moment_gap < cfg.eps2;
    if randomized {
        new_x = coordinate_randomize(&new_x, src);
    }

    state.m = m;
    state.v = v;
    state.s = s;
    state.t = iteration;
    Ok(StepReport {
        new_x,
        grad_norm,
        moment_gap,
        randomized,
    })
}

/// Adam with bias correction, on the same schedule and `ε₁` as HOME.
pub fn adam_step(
    x: &DenseVector,
    g: &DenseVector,
    state: &mut MomentState,
    cfg: &HomeConfig,
) -> Result<StepReport, OptimError> {
    check_dims(x, g, state)?;
    let lr = adaptive_lr(state.t, cfg)?;
    let iteration = state.t + 1;
    let g = clipped(g, cfg);
    let ti = iteration as i32;
    let c1 = 1.0 - cfg.beta1.powi(ti);
    let c2 = 1.0 - cfg.beta2.powi(ti);

    let mut m = state.m.clone();
    let mut v = state.v.clone();
    let mut new_x = x.clone();
    let mut m_hat_sq = Vec::with_capacity(x.dim());
    for i in 0..x.dim() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * (g[i] * g[i]);
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        new_x[i] = x[i] - lr * m_hat / (v_hat.sqrt() + cfg.eps1);
        m_hat_sq.push(m_hat);
    }
    for (what, vec) in [
        ("first moment", &m),
        ("second moment", &v),
        ("iterate", &new_x),
    ] {
        vec.check_finite()
            .map_err(|e| non_finite(e, iteration, what))?;
    }
    state.m = m;
    state.v = v;
    state.t = iteration;
    Ok(StepReport {
        new_x,
        grad_norm: g.norm_inf(),
        moment_gap: DenseVector::new(m_hat_sq)?.norm_l2(),
        randomized: false,
    })
}

/// Heavy-ball momentum: `M ← β₁M + g`, `x ← x − α_t M`.
pub fn momentum_sgd_step(
    x: &DenseVector,
    g: &DenseVector,
    state: &mut MomentState,
    cfg: &HomeConfig,
) -> Result<StepReport, OptimError> {
    check_dims(x, g, state)?;
    let lr = adaptive_lr(state.t, cfg)?;
    let iteration = state.t + 1;
    let g = clipped(g, cfg);
    let m = state.m.zip_map(&g, |m, g| cfg.beta1 * m + g)?;
    let new_x = x.zip_map(&m, |x, m| x - lr * m)?;
    for (what, vec) in [("velocity", &m), ("iterate", &new_x)] {
        vec.check_finite()
            .map_err(|e| non_finite(e, iteration, what))?;
    }
    let moment_gap = m.norm_l2();
    state.m = m;
    state.t = iteration;
    Ok(StepReport {
        new_x,
        grad_norm: g.norm_inf(),
        moment_gap,
        randomized: false,
    })
}

/// STORM recursive momentum: `d ← g + (1 − a)(d − g_prev)`, `x ← x − α_t d`.
///
/// `g_prev` is the gradient at the previous iterate evaluated on the current
/// sample; it is ignored on the first step, where `d = g`.
pub fn storm_step(
    x: &DenseVector,
    g: &DenseVector,
    g_prev: &DenseVector,
    state: &mut MomentState,
    cfg: &HomeConfig,
) -> Result<StepReport, OptimError> {
    check_dims(x, g, state)?;
    check_dims(x, g_prev, state)?;
    let lr = adaptive_lr(state.t, cfg)?;
    let iteration = state.t + 1;
    let g = clipped(g, cfg);
    let d = if state.t == 0 {
        g.clone()
    } else {
        let g_prev = clipped(g_prev, cfg);
        let keep = 1.0 - cfg.storm_momentum;
        let correction = state.m.sub(&g_prev)?;
        g.zip_map(&correction, |g, c| g + keep * c)?
    };
    let new_x = x.zip_map(&d, |x, d| x - lr * d)?;
    for (what, vec) in [("estimator", &d), ("iterate", &new_x)] {
        vec.check_finite()
            .map_err(|e| non_finite(e, iteration, what))?;
    }
    let moment_gap = d.norm_l2();
    state.m = d;
    state.t = iteration;
    Ok(StepReport {
        new_x,
        grad_norm: g.norm_inf(),
        moment_gap,
        randomized: false,
    })
}

fn check_dims(x: &DenseVector, g: &DenseVector, state: &MomentState) -> Result<(), OptimError> {
    if x.dim() != g.dim() || x.dim() != state.dim() {
        return Err(OptimError::Dimension {
            x: x.dim(),
            g: g.dim(),
            state: state.dim(),
        });
    }
    Ok(())
}

fn clipped(g: &DenseVector, cfg: &HomeConfig) -> DenseVector {
    match cfg.grad_clip {
        Some(bound) => g.map(|v| v.clamp(-bound, bound)),
        None => g.clone(),
    }
}

fn non_finite(err: TensorError, iteration: usize, what: &'static str) -> OptimError {
    match err {
        TensorError::NonFinite { index, value } => OptimError::NonFinite {
            iteration,
            what,
            coordinate: index,
            value,
        },
        other => OptimError::Tensor(other),
    }
}
