use std::path::Path;
use std::process::{Command, Output};

fn home(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_home"))
        .args(args)
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_traces_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("nested/out");
    let o = home(&[
        "run",
        "--iters",
        "10",
        "--seed",
        "1",
        "--seed",
        "2",
        "--optimizer",
        "home3",
        "--optimizer",
        "adam",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in [
        "trace_home3_seed1.csv",
        "trace_adam_seed2.csv",
        "summary.csv",
        "timing.csv",
    ] {
        assert!(out.join(name).exists(), "{name}");
    }
    let trace = std::fs::read_to_string(out.join("trace_home3_seed1.csv")).unwrap();
    assert_eq!(
        trace.lines().next().unwrap(),
        "iter,loss,grad_norm,moment_gap,randomized"
    );
    assert_eq!(trace.lines().count(), 12);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("optimizer,runs,failed"));
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "optimizers = [\"storm\"]\nseeds = [4]\niters = 30\nformat = \"csv\"\n[problem]\nkind = \"logreg\"\nsamples = 20\nfeatures = 3\n",
    )
    .unwrap();
    let out = tmp.path().join("o");
    let o = home(&[
        "run",
        "--config",
        path(&cfg),
        "--iters",
        "5",
        "--format",
        "json",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("trace_storm_seed4.json")).unwrap();
    assert_eq!(text.matches("\"iter\"").count(), 6);
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(
        home(&["run", "--beta3", "0.5", "--out", path(&out)])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(home(&["run", "--optimizer", "sgd"]).status.code(), Some(1));
    assert_eq!(
        home(&["run", "--config", "/nonexistent/exp.toml"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(home(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(home(&["--help"]).status.code(), Some(0));
}

#[test]
fn all_runs_failing_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "[problem]\nkind = \"quadratic\"\ncurvature = 1e200\ninit_radius = 1e200\n",
    )
    .unwrap();
    let out = tmp.path().join("o");
    let o = home(&["run", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rate_and_icc_verbs() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = tmp.path().join("t.csv");
    let mut text = String::from("iter,loss,grad_norm,moment_gap,randomized\n");
    for t in 0..=100u32 {
        let loss = if t == 0 { 1.0 } else { 1.0 / f64::from(t) };
        text.push_str(&format!("{t},{loss:.16e},1,0,0\n"));
    }
    std::fs::write(&trace, text).unwrap();
    let o = home(&["rate", path(&trace)]);
    assert!(o.status.success());
    let slope: f64 = String::from_utf8(o.stdout).unwrap().trim().parse().unwrap();
    assert!((slope + 1.0).abs() < 1e-12);

    let table = tmp.path().join("icc.csv");
    std::fs::write(&table, "a,b,c\n1,1,1\n2,2,2\n5,5,5\n").unwrap();
    let o = home(&["icc", path(&table)]);
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("1.0000000000000000e0,"));

    assert_eq!(home(&["rate", "/nonexistent.csv"]).status.code(), Some(1));
}
