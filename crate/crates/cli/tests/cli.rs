use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn peakreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_peakreg"))
        .args(args)
        .output()
        .expect("spawn peakreg")
}

fn ok(args: &[&str]) -> String {
    let out = peakreg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two hours of a wide rectangle plus a matching regulation signal.
fn inputs(dir: &TempDir) -> (PathBuf, PathBuf) {
    let trace = dir.path().join("trace.csv");
    let reg = dir.path().join("reg.csv");
    ok(&[
        "synth",
        "trace",
        "--category",
        "rect.wide.low",
        "--hours",
        "2",
        "--out",
        s(&trace),
    ]);
    ok(&[
        "synth",
        "reg",
        "--seed",
        "3",
        "--hours",
        "2",
        "--out",
        s(&reg),
    ]);
    (trace, reg)
}

#[test]
fn synth_then_bill() {
    let dir = TempDir::new().unwrap();
    let (trace, _) = inputs(&dir);
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("timestamp,power_mw\n"));
    assert_eq!(text.lines().count(), 361);

    let out = ok(&["bill", "--trace", s(&trace)]);
    assert!(out.contains("window 0:"));
    assert!(out.contains("window 1:"));
    assert!(out.contains("total:"));
}

#[test]
fn optimize_modes_write_json() {
    let dir = TempDir::new().unwrap();
    let (trace, reg) = inputs(&dir);
    for mode in ["peak", "regulation", "joint"] {
        let json = dir.path().join(format!("{mode}.json"));
        let lp = dir.path().join(format!("{mode}.lp"));
        let out = peakreg(&[
            "optimize",
            "--mode",
            mode,
            "--trace",
            s(&trace),
            "--reg",
            s(&reg),
            "--out",
            s(&json),
            "--dump-lp",
            s(&lp),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
        assert_eq!(doc["mode"], mode);
        assert_eq!(
            doc["result"]["dispatch"]["b"].as_array().unwrap().len(),
            360
        );
        assert!(std::fs::metadata(&lp).unwrap().len() > 0);
    }
}

#[test]
fn sweep_is_deterministic_across_threads() {
    let dir = TempDir::new().unwrap();
    let (trace, reg) = inputs(&dir);
    let mut docs = Vec::new();
    for threads in ["1", "2", "1"] {
        let json = dir.path().join(format!("sweep{}.json", docs.len()));
        let out = ok(&[
            "--threads",
            threads,
            "sweep",
            "--trace",
            s(&trace),
            "--reg",
            s(&reg),
            "--out",
            s(&json),
        ]);
        assert!(out.contains("hours evaluated: 2"));
        docs.push(std::fs::read(&json).unwrap());
    }
    assert_eq!(docs[0], docs[1]);
    assert_eq!(docs[0], docs[2]);
    let doc: serde_json::Value = serde_json::from_slice(&docs[0]).unwrap();
    assert_eq!(doc["per_window"].as_array().unwrap().len(), 2);
}

#[test]
fn analyze_peaks_counts_a_synthetic_day() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("t.csv");
    ok(&[
        "synth",
        "trace",
        "--category",
        "rect.narrow.high",
        "--count",
        "3",
        "--gap",
        "600",
        "--hours",
        "24",
        "--out",
        s(&trace),
    ]);
    let json = dir.path().join("peaks.json");
    let out = ok(&["analyze-peaks", "--trace", s(&trace), "--out", s(&json)]);
    assert!(out.contains("days: 1"), "{out}");
    assert!(out.contains("peaks: 72"), "{out}");
}

#[test]
fn missing_file_is_a_usage_error() {
    let out = peakreg(&["bill", "--trace", "/nonexistent/trace.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/nonexistent/trace.csv"), "{err}");
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(
        peakreg(&["optimize", "--mode", "sideways"]).status.code(),
        Some(1)
    );
    let dir = TempDir::new().unwrap();
    let (trace, _) = inputs(&dir);
    let out = peakreg(&["optimize", "--mode", "joint", "--trace", s(&trace)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_config_reports_the_line() {
    let dir = TempDir::new().unwrap();
    let (trace, _) = inputs(&dir);
    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "lambda_elec = 50\nlambda_bogus = 1\n").unwrap();
    let out = peakreg(&["bill", "--trace", s(&trace), "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2"));
}

#[test]
fn unbounded_market_exits_two() {
    let dir = TempDir::new().unwrap();
    let (trace, reg) = inputs(&dir);
    let cfg = dir.path().join("free_money.conf");
    std::fs::write(&cfg, "lambda_c = 100\nlambda_mis = 0\nlambda_b = 0\n").unwrap();
    let out = peakreg(&[
        "optimize",
        "--mode",
        "regulation",
        "--trace",
        s(&trace),
        "--reg",
        s(&reg),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn experiment_runs_a_few_trials() {
    let dir = TempDir::new().unwrap();
    let json = dir.path().join("exp.json");
    let out = ok(&[
        "experiment",
        "categories",
        "--trials",
        "1",
        "--out",
        s(&json),
    ]);
    assert!(out.contains("tri.narrow.low"));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc["categories"].as_array().unwrap().len(), 10);
}
