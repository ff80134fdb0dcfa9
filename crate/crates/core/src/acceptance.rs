//! The acceptance suite: twelve pass/fail checks, each against an oracle
//! written separately from the code it checks, with a wall-clock budget.
//!
//! [`run_all`] uses the library defaults. [`run_all_with`] takes the
//! hyperparameters under test so that tampering with them can be shown to
//! break the suite.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::analysis::{early_phase_window, icc_oneway, rate_slope};
use crate::experiment::{run_experiment, sub_seed, ExperimentConfig, ProblemKind};
use crate::optim::{disable_third_moment, home3_step, HomeConfig, MomentState};
use crate::problems::{
    inject_noise, synth_logreg, synth_lowrank, DictLearnProblem, DnmfProblem, Problem, Quadratic,
};
use crate::randomization::{coordinate_randomize, operator_norm_estimate, PermutationSource};
use crate::runner::{run, run_with, OptimizerKind, RunOptions};
use crate::tensor::{DenseMatrix, DenseVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub limit_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub criteria: Vec<CriterionReport>,
}

impl AcceptanceReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn lines(&self) -> Vec<String> {
        self.criteria
            .iter()
            .map(|c| {
                format!(
                    "{} {:>2} {} ({:.3}s of {}s): {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.id,
                    c.name,
                    c.seconds,
                    c.limit_seconds,
                    c.detail
                )
            })
            .collect()
    }
}

type Check = fn(&HomeConfig) -> Result<String, String>;

const CRITERIA: [(u32, &str, f64, Check); 12] = [
    (1, "adam-reduction", 5.0, adam_reduction),
    (2, "scalar-hand-trace", 1.0, scalar_hand_trace),
    (3, "randomization-norm", 2.0, randomization_norm),
    (4, "trigger", 1.0, trigger),
    (5, "gradients", 10.0, gradients),
    (6, "small-gradient-rate", 30.0, small_gradient_rate),
    (7, "dictlearn-ordering", 60.0, dictlearn_ordering),
    (8, "randomized-convergence", 10.0, randomized_convergence),
    (9, "noise-bound", 5.0, noise_bound),
    (10, "icc-oracle", 2.0, icc_oracle),
    (11, "rate-estimator", 1.0, rate_estimator),
    (12, "determinism", 10.0, determinism),
];

pub fn run_all() -> AcceptanceReport {
    run_all_with(&HomeConfig::default())
}

/// Runs every criterion with `defaults` as the step hyperparameters. Only
/// the `β`, `ε`, learning-rate and power fields are taken from `defaults`;
/// horizons and seeds are fixed by each criterion.
pub fn run_all_with(defaults: &HomeConfig) -> AcceptanceReport {
    AcceptanceReport {
        criteria: CRITERIA
            .iter()
            .map(|&(id, name, limit, check)| evaluate(id, name, limit, check, defaults))
            .collect(),
    }
}

pub fn run_one(id: u32, defaults: &HomeConfig) -> Option<CriterionReport> {
    CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .map(|&(id, name, limit, check)| evaluate(id, name, limit, check, defaults))
}

fn evaluate(
    id: u32,
    name: &str,
    limit: f64,
    check: Check,
    defaults: &HomeConfig,
) -> CriterionReport {
    let start = Instant::now();
    let outcome = check(defaults);
    let seconds = start.elapsed().as_secs_f64();
    let (mut passed, mut detail) = match outcome {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    if seconds >= limit {
        passed = false;
        detail = format!("over time budget; {detail}");
    }
    CriterionReport {
        id,
        name: name.to_string(),
        passed,
        detail,
        seconds,
        limit_seconds: limit,
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn with_horizon(defaults: &HomeConfig, iters: usize, seed: u64) -> HomeConfig {
    HomeConfig {
        max_iters: iters,
        seed,
        randomize: false,
        grad_clip: None,
        ..defaults.clone()
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Adam on `½‖x‖²` with the reference constants, written out directly.
fn reference_adam(x0: &[f64], iters: usize) -> Vec<Vec<f64>> {
    let (b1, b2, eps, lr0) = (0.9_f64, 0.999_f64, 1e-8_f64, 0.001_f64);
    let mut x = x0.to_vec();
    let mut m = vec![0.0; x.len()];
    let mut v = vec![0.0; x.len()];
    let (mut p1, mut p2) = (1.0, 1.0);
    let mut out = Vec::with_capacity(iters);
    for t in 0..iters {
        p1 *= b1;
        p2 *= b2;
        let lr = lr0 * (1.0 - t as f64 / iters as f64);
        for i in 0..x.len() {
            let g = x[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let mh = m[i] / (1.0 - p1);
            let vh = v[i] / (1.0 - p2);
            x[i] -= lr * mh / (vh.sqrt() + eps);
        }
        out.push(x.clone());
    }
    out
}

fn adam_reduction(defaults: &HomeConfig) -> Result<String, String> {
    let iters = 1000;
    let problem = Quadratic::new(16);
    let mut worst = 0.0_f64;
    for seed in 0..10 {
        let cfg = disable_third_moment(&with_horizon(defaults, iters, seed));
        let x0 = problem.initial_point(seed);
        let oracle = reference_adam(x0.as_slice(), iters);
        let mut state = MomentState::new(16).map_err(|e| e.to_string())?;
        let mut src = PermutationSource::new(seed);
        let mut x = x0;
        for (t, expected) in oracle.iter().enumerate() {
            let (_, g) = problem
                .value_and_grad(&x, t as u64)
                .map_err(|e| e.to_string())?;
            x = home3_step(&x, &g, &mut state, &cfg, &mut src)
                .map_err(|e| e.to_string())?
                .new_x;
            for (i, (a, b)) in x.iter().zip(expected).enumerate() {
                let d = (a - b).abs();
                worst = worst.max(d);
                ensure(d <= 1e-12, || {
                    format!("seed {seed} step {} coordinate {i}: {a} vs {b}", t + 1)
                })?;
            }
        }
    }
    Ok(format!(
        "max deviation {worst:.3e} over 10 seeds x 1000 steps"
    ))
}

fn scalar_hand_trace(defaults: &HomeConfig) -> Result<String, String> {
    let cfg = with_horizon(defaults, 1, 0);
    let x = DenseVector::new(vec![1.0]).map_err(|e| e.to_string())?;
    let g = DenseVector::new(vec![0.5]).map_err(|e| e.to_string())?;
    let mut state = MomentState::new(1).map_err(|e| e.to_string())?;
    let rep = home3_step(&x, &g, &mut state, &cfg, &mut PermutationSource::new(0))
        .map_err(|e| e.to_string())?;
    let (m, v, s) = state.bias_corrected(&cfg);
    let step = 1.0 - rep.new_x[0];
    let exact = 0.001 * (0.5 - 0.125) / (0.25_f64.sqrt() + 1e-8);
    for (what, got, want) in [
        ("M", m[0], 0.5),
        ("V", v[0], 0.25),
        ("S", s[0], 0.125),
        ("step", step, exact),
    ] {
        ensure((got - want).abs() <= 1e-12, || {
            format!("{what}: {got} vs {want}")
        })?;
    }
    ensure((step - 7.5e-4).abs() <= 1e-10, || {
        format!("step {step} is not close to 7.5e-4")
    })?;
    Ok(format!("M=0.5 V=0.25 S=0.125 step={step:.12e}"))
}

fn randomization_norm(_: &HomeConfig) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut src = PermutationSource::new(7);
    let mut worst = 0.0_f64;
    for dim in [1usize, 8, 64] {
        for _ in 0..1000 {
            let data: Vec<f64> = (0..dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * 10f64.powi(rng.random_range(-3..4)))
                .collect();
            let x = DenseVector::new(data.clone()).map_err(|e| e.to_string())?;
            let y = coordinate_randomize(&x, &mut src);
            let mut a: Vec<u64> = data.iter().map(|v| v.to_bits()).collect();
            let mut b: Vec<u64> = y.iter().map(|v| v.to_bits()).collect();
            a.sort_unstable();
            b.sort_unstable();
            ensure(a == b, || format!("D={dim}: entries changed"))?;
            let (nx, ny) = (x.norm_l2(), y.norm_l2());
            let rel = (nx - ny).abs() / nx;
            worst = worst.max(rel);
            ensure(rel <= 1e-15, || format!("D={dim}: norm {nx} -> {ny}"))?;
        }
        let op = operator_norm_estimate(&mut src, dim, 1000);
        ensure((op - 1.0).abs() <= 1e-15, || {
            format!("D={dim}: operator norm {op}")
        })?;
    }
    Ok(format!(
        "3000 vectors, worst relative norm change {worst:.1e}, operator norm 1"
    ))
}

fn trigger(defaults: &HomeConfig) -> Result<String, String> {
    let dim = 8;
    let cfg = HomeConfig {
        randomize: true,
        ..with_horizon(defaults, 10, 3)
    };
    let x = DenseVector::new((1..=dim).map(|i| i as f64 * 0.25).collect())
        .map_err(|e| e.to_string())?;
    // g = 1 gives identical first and high-order moments, so the gap is 0.
    let g = DenseVector::new(vec![1.0; dim]).map_err(|e| e.to_string())?;
    let mut state = MomentState::new(dim).map_err(|e| e.to_string())?;
    let rep = home3_step(&x, &g, &mut state, &cfg, &mut PermutationSource::new(3))
        .map_err(|e| e.to_string())?;
    ensure(rep.moment_gap < cfg.eps2, || {
        format!("gap {} not below eps2", rep.moment_gap)
    })?;
    ensure(rep.randomized, || "randomized flag not set".into())?;
    // pre-randomization iterate: x − α·0/(√V̂ + ε₁) = x
    let mut pre: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
    let mut got: Vec<u64> = rep.new_x.iter().map(|v| v.to_bits()).collect();
    pre.sort_unstable();
    got.sort_unstable();
    ensure(pre == got, || {
        format!(
            "{:?} is not a permutation of {:?}",
            rep.new_x.as_slice(),
            x.as_slice()
        )
    })?;

    let off = HomeConfig {
        randomize: false,
        ..cfg
    };
    let mut state = MomentState::new(dim).map_err(|e| e.to_string())?;
    let rep_off = home3_step(&x, &g, &mut state, &off, &mut PermutationSource::new(3))
        .map_err(|e| e.to_string())?;
    ensure(!rep_off.randomized && rep_off.new_x == x, || {
        "randomization fired while disabled".into()
    })?;
    Ok(format!(
        "gap {:.1e} < eps2; permuted to {:?}",
        rep.moment_gap,
        rep.new_x.as_slice()
    ))
}

fn central_difference(f: &dyn Fn(&DenseVector) -> f64, x: &DenseVector) -> DenseVector {
    let h = 1e-6;
    let mut out = Vec::with_capacity(x.dim());
    let mut probe = x.clone();
    for i in 0..x.dim() {
        let c = probe[i];
        probe[i] = c + h;
        let up = f(&probe);
        probe[i] = c - h;
        let down = f(&probe);
        probe[i] = c;
        out.push((up - down) / (2.0 * h));
    }
    DenseVector::new(out).expect("nonempty")
}

fn relative_gap(a: &DenseVector, b: &DenseVector) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt();
    let den = a.norm_l2().max(b.norm_l2()).max(1e-12);
    num / den
}

/// Gaussian point with every entry at least `margin` away from zero, so no
/// `|·|` or ReLU kink lies within the difference stencil.
fn smooth_point(dim: usize, seed: u64, margin: f64) -> DenseVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..dim)
        .map(|_| {
            let v: f64 = rng.sample(StandardNormal);
            if v.abs() < margin {
                v + margin.copysign(v)
            } else {
                v
            }
        })
        .collect();
    DenseVector::new(data).expect("dim >= 1")
}

fn gradients(_: &HomeConfig) -> Result<String, String> {
    let tol = 1e-5;
    let input = synth_lowrank(8, 6, 2, 5).map_err(|e| e.to_string())?;
    let dnmf = DnmfProblem::new(input.map(f64::abs), vec![4, 3], 0.5).map_err(|e| e.to_string())?;
    let problems: Vec<(&str, Box<dyn Problem>)> = vec![
        ("quadratic", Box::new(Quadratic::with_curvature(12, 2.5))),
        (
            "dictlearn",
            Box::new(DictLearnProblem::new(input.clone(), 0.1, 3).map_err(|e| e.to_string())?),
        ),
        ("dnmf", Box::new(dnmf.clone())),
        (
            "logreg",
            Box::new(synth_logreg(30, 5, 0.01, 8).map_err(|e| e.to_string())?),
        ),
    ];
    let mut worst = 0.0_f64;
    for (name, p) in &problems {
        for seed in 0..20 {
            let x = smooth_point(p.dim(), seed, 0.05);
            let (_, g) = p.value_and_grad(&x, 0).map_err(|e| e.to_string())?;
            let f = |y: &DenseVector| p.value_and_grad(y, 0).expect("finite").0;
            let err = relative_gap(&g, &central_difference(&f, &x));
            worst = worst.max(err);
            ensure(err <= tol, || {
                format!("{name} point {seed}: relative error {err:.3e}")
            })?;
        }
    }
    let noisy = dnmf.noisy(11);
    for seed in 0..20 {
        let x = smooth_point(noisy.dim(), seed, 0.05);
        let mut params = noisy.split(&x).map_err(|e| e.to_string())?;
        let u = noisy.noise_for(&params.features, seed);
        // move ReLU arguments away from the kink with the noise held fixed
        params.features = params
            .features
            .zip_map(&u, |y, n| {
                if (y + n).abs() < 0.05 {
                    y + 0.1_f64.copysign(y + n)
                } else {
                    y
                }
            })
            .map_err(|e| e.to_string())?;
        let x = noisy.join(&params);
        let (_, g) = noisy
            .value_and_grad_with_noise(&params, &u)
            .map_err(|e| e.to_string())?;
        let f = |y: &DenseVector| {
            noisy
                .value_and_grad_with_noise(&noisy.split(y).expect("sized"), &u)
                .expect("finite")
                .0
        };
        let err = relative_gap(&g, &central_difference(&f, &x));
        worst = worst.max(err);
        ensure(err <= tol, || {
            format!("noisy-dnmf point {seed}: relative error {err:.3e}")
        })?;
    }
    Ok(format!(
        "5 problems x 20 points, worst relative error {worst:.2e}"
    ))
}

fn small_gradient_rate(defaults: &HomeConfig) -> Result<String, String> {
    let iters = 500;
    let problem = Quadratic::new(16);
    let mut slopes = Vec::new();
    for seed in 0..10 {
        let cfg = with_horizon(defaults, iters, seed);
        let rec = run(
            &problem,
            OptimizerKind::Home3,
            &cfg,
            &problem.initial_point(seed),
        )
        .map_err(|e| e.to_string())?;
        if let Some(t) = rec.grad_norms.iter().position(|&g| g >= 1.0) {
            return Err(format!(
                "seed {seed}: gradient norm {} at iteration {t}",
                rec.grad_norms[t]
            ));
        }
        let slope = rate_slope(&rec.losses, 0.0, 10..=iters).map_err(|e| e.to_string())?;
        ensure(slope <= -0.4, || format!("seed {seed}: slope {slope:.4}"))?;
        slopes.push(slope);
    }
    let worst = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let large = Quadratic::new(16).with_init_radius(3.0);
    let cfg = with_horizon(defaults, iters, 0);
    let x0 = large.initial_point(0);
    let early = match run(&large, OptimizerKind::Home3, &cfg, &x0) {
        Ok(rec) => match early_phase_window(&rec.grad_norms, 1.0) {
            Some(w) => match rate_slope(&rec.losses, 0.0, w.clone()) {
                Ok(s) => format!(
                    "large-gradient start: slope {s:.4} over {}..={}",
                    w.start(),
                    w.end()
                ),
                Err(e) => format!("large-gradient start: {e}"),
            },
            None => "large-gradient start: no early phase of 3+ iterations".into(),
        },
        Err(e) => format!("large-gradient start failed: {e}"),
    };
    Ok(format!("10 seeds, slopes <= {worst:.4}; {early}"))
}

fn dictlearn_ordering(defaults: &HomeConfig) -> Result<String, String> {
    let iters = 100;
    let mut home = Vec::new();
    let mut adam = Vec::new();
    for seed in 0..10 {
        let input = synth_lowrank(40, 60, 5, sub_seed(seed, 1)).map_err(|e| e.to_string())?;
        let problem = DictLearnProblem::new(input, DictLearnProblem::DEFAULT_LAMBDA, 5)
            .map_err(|e| e.to_string())?;
        let x0 = problem.initial_point(sub_seed(seed, 2));
        let cfg = with_horizon(defaults, iters, seed);
        for (kind, sink) in [
            (OptimizerKind::Home3, &mut home),
            (OptimizerKind::Adam, &mut adam),
        ] {
            let rec =
                run(&problem, kind, &cfg, &x0).map_err(|e| format!("{kind} seed {seed}: {e}"))?;
            let (first, last) = (rec.losses[0], rec.losses[iters]);
            ensure(last < first, || {
                format!("{kind} seed {seed}: loss {first} -> {last}")
            })?;
            sink.push(last);
        }
    }
    let (mh, ma) = (median(&home), median(&adam));
    ensure(mh <= 1.05 * ma, || {
        format!("median final loss home3 {mh:.6} vs adam {ma:.6}")
    })?;
    Ok(format!("median final loss home3 {mh:.6}, adam {ma:.6}"))
}

fn randomized_convergence(defaults: &HomeConfig) -> Result<String, String> {
    let iters = 500;
    let problem = Quadratic::new(16);
    let forced = RunOptions {
        forced_randomization_period: Some(25),
        ..RunOptions::new()
    };
    let mut plain = Vec::new();
    let mut shuffled = Vec::new();
    for seed in 0..10 {
        let cfg = with_horizon(defaults, iters, seed);
        let x0 = problem.initial_point(seed);
        let a = run(&problem, OptimizerKind::Home3, &cfg, &x0).map_err(|e| e.to_string())?;
        let b = run_with(&problem, OptimizerKind::Home3, &cfg, &x0, &forced)
            .map_err(|e| e.to_string())?;
        ensure(b.randomization_events.len() == iters / 25, || {
            format!(
                "seed {seed}: {} randomizations",
                b.randomization_events.len()
            )
        })?;
        plain.push(a.losses[iters]);
        shuffled.push(b.losses[iters]);
    }
    let (mp, ms) = (median(&plain), median(&shuffled));
    ensure(ms <= 2.0 * mp, || {
        format!("median final loss randomized {ms:.4e} vs plain {mp:.4e}")
    })?;
    Ok(format!(
        "median final loss randomized {ms:.4e}, plain {mp:.4e}"
    ))
}

fn noise_bound(_: &HomeConfig) -> Result<String, String> {
    let y = DenseMatrix::new(1000, 1000, vec![10.0; 1_000_000]).map_err(|e| e.to_string())?;
    let noisy = inject_noise(&y, &mut ChaCha8Rng::seed_from_u64(13));
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in noisy.as_slice() {
        // exact: both operands lie within a factor of two of each other
        let u = v - 10.0;
        ensure((-1.0..=1.0).contains(&u), || {
            format!("noise entry {u} outside [-1, 1]")
        })?;
        lo = lo.min(u);
        hi = hi.max(u);
    }
    ensure(lo <= -0.99 && hi >= 0.99, || {
        format!("extremes {lo} / {hi} not within 1% of the bounds")
    })?;
    Ok(format!("10^6 draws in [{lo:.6}, {hi:.6}]"))
}

/// ICC(1,1) from sums of squares, computed with explicit loops.
fn anova_icc(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len() as f64;
    let k = rows[0].len() as f64;
    let all: Vec<f64> = rows.iter().flatten().copied().collect();
    let grand = all.iter().sum::<f64>() / all.len() as f64;
    let sst: f64 = all.iter().map(|v| (v - grand).powi(2)).sum();
    let ssb: f64 = rows
        .iter()
        .map(|r| {
            let m = r.iter().sum::<f64>() / k;
            k * (m - grand).powi(2)
        })
        .sum();
    let ssw = sst - ssb;
    let msb = ssb / (n - 1.0);
    let msw = ssw / (n * (k - 1.0));
    (msb - msw) / (msb + (k - 1.0) * msw)
}

fn icc_oracle(_: &HomeConfig) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let offsets = Uniform::new(-3.0, 3.0).expect("valid range");
    let mut worst = 0.0_f64;
    for table in 0..100 {
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                let subject = offsets.sample(&mut rng);
                (0..3)
                    .map(|_| subject + rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let m = DenseMatrix::from_rows(&rows).map_err(|e| e.to_string())?;
        let got = icc_oneway(&m).map_err(|e| e.to_string())?.icc;
        let want = anova_icc(&rows);
        let d = (got - want).abs();
        worst = worst.max(d);
        ensure(d <= 1e-10, || format!("table {table}: {got} vs {want}"))?;
    }
    let perfect = DenseMatrix::from_rows(&[
        vec![1.0; 3],
        vec![4.0; 3],
        vec![-2.0; 3],
        vec![7.5; 3],
        vec![0.0; 3],
    ])
    .map_err(|e| e.to_string())?;
    let icc = icc_oneway(&perfect).map_err(|e| e.to_string())?.icc;
    ensure(icc == 1.0, || format!("perfect agreement gives {icc}"))?;
    Ok(format!(
        "100 tables, max deviation {worst:.1e}; perfect agreement = 1"
    ))
}

fn rate_estimator(_: &HomeConfig) -> Result<String, String> {
    let mut parts = Vec::new();
    for alpha in [1.0, 5.0 / 6.0, 0.5] {
        let losses: Vec<f64> = (0..=1000)
            .map(|t| if t == 0 { 1.0 } else { (t as f64).powf(-alpha) })
            .collect();
        let s = rate_slope(&losses, 0.0, 1..=1000).map_err(|e| e.to_string())?;
        ensure((s + alpha).abs() <= 1e-6, || {
            format!("t^-{alpha}: slope {s}")
        })?;
        parts.push(format!("{s:.9}"));
    }
    Ok(format!("slopes {}", parts.join(", ")))
}

fn determinism(defaults: &HomeConfig) -> Result<String, String> {
    let base = std::env::temp_dir().join(format!(
        "home-accept-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or_default()
    ));
    let result = determinism_in(&base, defaults);
    let _ = std::fs::remove_dir_all(&base);
    result
}

fn determinism_in(base: &std::path::Path, defaults: &HomeConfig) -> Result<String, String> {
    let mut files = 0;
    for kind in [
        ProblemKind::Quadratic,
        ProblemKind::Dictlearn,
        ProblemKind::NoisyDnmf,
        ProblemKind::Logreg,
    ] {
        let mut cfg = ExperimentConfig::default();
        cfg.problem.kind = kind;
        cfg.problem.rows = 12;
        cfg.problem.cols = 10;
        cfg.problem.rank = 3;
        cfg.problem.layers = vec![6, 3];
        cfg.problem.samples = 40;
        cfg.problem.features = 4;
        cfg.iters = 50;
        cfg.seeds = vec![0, 1, 2];
        cfg.optimizers = vec![
            OptimizerKind::Home3,
            OptimizerKind::Adam,
            OptimizerKind::MomentumSgd,
            OptimizerKind::Storm,
        ];
        if kind == ProblemKind::Dictlearn {
            cfg.optimizers.push(OptimizerKind::Admm);
        }
        cfg.optimizer.beta1 = defaults.beta1;
        cfg.optimizer.beta2 = defaults.beta2;
        cfg.optimizer.beta3 = defaults.beta3;
        cfg.optimizer.forced_randomization_period = (kind == ProblemKind::Quadratic).then_some(10);
        let mut second = cfg.clone();
        cfg.output_dir = base.join(kind.as_str()).join("a");
        second.output_dir = base.join(kind.as_str()).join("b");
        let a = run_experiment(&cfg).map_err(|e| e.to_string())?;
        let b = run_experiment(&second).map_err(|e| e.to_string())?;
        let paths = a.runs.iter().map(|r| &r.path).chain([&a.summary_path]);
        let others = b.runs.iter().map(|r| &r.path).chain([&b.summary_path]);
        for (p, q) in paths.zip(others) {
            let x = std::fs::read(p).map_err(|e| e.to_string())?;
            let y = std::fs::read(q).map_err(|e| e.to_string())?;
            ensure(x == y, || format!("{} differs between runs", p.display()))?;
            files += 1;
        }
    }
    Ok(format!("{files} files byte-identical across two runs"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_adam_first_step() {
        let traj = reference_adam(&[1.0], 10);
        assert!((traj[0][0] - (1.0 - 0.001 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn anova_icc_matches_known_table() {
        // subjects differ, raters agree exactly within each subject
        assert_eq!(anova_icc(&[vec![1.0, 1.0], vec![3.0, 3.0]]), 1.0);
        // no between-subject spread: ICC = -1/(k-1)
        let v = anova_icc(&[vec![1.0, -1.0], vec![-1.0, 1.0]]);
        assert!((v + 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_criterion() {
        assert!(run_one(99, &HomeConfig::default()).is_none());
    }
}
