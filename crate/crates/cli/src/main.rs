//! `home`: run optimizer grids, the acceptance suite, and trace analyses.
//!
//! Exit codes: 0 success, 1 config or input error, 2 every run failed
//! numerically, 3 acceptance failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use home_core::acceptance::run_all;
use home_core::experiment::{write_summary, ExperimentConfig, Overrides, ProblemKind};
use home_core::problems::load_csv;
use home_core::trace::load_trace;
use home_core::{icc_oneway, rate_slope, run_experiment, OptimizerKind, TraceFormat};

const EXIT_CONFIG: u8 = 1;
const EXIT_ALL_FAILED: u8 = 2;
const EXIT_ACCEPTANCE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "home",
    version,
    about = "High-order momentum optimizer benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an optimizer x seed grid and write traces plus a summary.
    Run(RunArgs),
    /// Run the acceptance suite.
    Accept {
        /// Also write acceptance.json into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Log-log convergence slope of a trace file.
    Rate {
        trace: PathBuf,
        /// Optimal value subtracted from the loss.
        #[arg(long, default_value_t = 0.0)]
        floor: f64,
        /// First iteration of the window.
        #[arg(long, default_value_t = 1)]
        from: usize,
        /// Last iteration of the window; defaults to the last row.
        #[arg(long)]
        to: Option<usize>,
    },
    /// One-way ICC of a CSV table with one row per subject.
    Icc { table: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_problem)]
    problem: Option<ProblemKind>,
    #[arg(long = "optimizer", value_parser = parse_optimizer)]
    optimizers: Vec<OptimizerKind>,
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    beta3: Option<f64>,
    #[arg(long, value_enum)]
    randomize: Option<Switch>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    format: Option<TraceFormat>,
    /// CSV input in place of synthetic data.
    #[arg(long)]
    data: Option<PathBuf>,
}

fn parse_problem(s: &str) -> Result<ProblemKind, String> {
    s.parse()
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    s.parse()
}

fn parse_format(s: &str) -> Result<TraceFormat, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Run(args) => run(args),
        Command::Accept { out } => accept(out),
        Command::Rate {
            trace,
            floor,
            from,
            to,
        } => rate(trace, floor, from, to),
        Command::Icc { table } => icc(table),
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn run(args: RunArgs) -> ExitCode {
    let mut cfg = match &args.config {
        Some(path) => match ExperimentConfig::from_file(path) {
            Ok(c) => c,
            Err(e) => return fail(EXIT_CONFIG, e),
        },
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides {
        problem: args.problem,
        optimizers: args.optimizers,
        seeds: args.seeds,
        iters: args.iters,
        beta3: args.beta3,
        randomize: args.randomize.map(|s| matches!(s, Switch::On)),
        output_dir: args.out,
        format: args.format,
        data: args.data,
    });
    let outcome = match run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    for r in outcome.failures() {
        eprintln!(
            "{} seed {}: {}",
            r.optimizer,
            r.seed,
            r.error.as_deref().unwrap_or_default()
        );
    }
    print!("{}", write_summary(&outcome.summary, TraceFormat::Csv));
    eprintln!(
        "{} runs, {} failed; summary in {}",
        outcome.runs.len(),
        outcome.failures().count(),
        outcome.summary_path.display()
    );
    if outcome.all_failed() {
        ExitCode::from(EXIT_ALL_FAILED)
    } else {
        ExitCode::SUCCESS
    }
}

fn accept(out: Option<PathBuf>) -> ExitCode {
    let report = run_all();
    for line in report.lines() {
        println!("{line}");
    }
    if let Some(dir) = out {
        let written = std::fs::create_dir_all(&dir).and_then(|_| {
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            std::fs::write(dir.join("acceptance.json"), json + "\n")
        });
        if let Err(e) = written {
            return fail(EXIT_CONFIG, format!("{}: {e}", dir.display()));
        }
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_ACCEPTANCE)
    }
}

fn rate(path: PathBuf, floor: f64, from: usize, to: Option<usize>) -> ExitCode {
    let rec = match load_trace(&path) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, format!("{}: {e}", path.display())),
    };
    let to = to.unwrap_or(rec.iterations());
    match rate_slope(&rec.losses, floor, from..=to) {
        Ok(s) => {
            println!("{s:.16e}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_CONFIG, e),
    }
}

fn icc(path: PathBuf) -> ExitCode {
    let table = match load_csv(&path) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    match icc_oneway(&table) {
        Ok(r) => {
            println!("icc,ms_between,ms_within,groups,raters,degenerate");
            println!(
                "{:.16e},{:.16e},{:.16e},{},{},{}",
                r.icc, r.ms_between, r.ms_within, r.groups, r.raters_per_group, r.degenerate
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_CONFIG, e),
    }
}
