use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nldisp::io::read_branch_csv;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nldisp"));
    c.env_remove("NLDISP_OUT_DIR");
    c
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn trace_follows_constant_solution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("constant_p1.json");
    let out = run(&["trace", "--config", s(&cfg), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_branch_csv(&dir.path().join("branch.csv")).unwrap();
    assert_eq!(rows[0].sup_norm, 0.0);
    for r in &rows[1..] {
        assert!((r.sup_norm - (r.lambda - 1.0)).abs() <= 1e-8, "{r:?}");
    }
    let near_two = rows
        .iter()
        .min_by(|a, b| (a.lambda - 2.0).abs().total_cmp(&(b.lambda - 2.0).abs()))
        .unwrap();
    assert!((near_two.sup_norm - (near_two.lambda - 1.0)).abs() < 1e-8);
    assert!((rows.last().unwrap().lambda - 3.0).abs() < 1e-12);
}

#[test]
fn verify_and_plot_after_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("gaussian.json");
    let d = s(dir.path());
    assert_eq!(
        run(&["trace", "--config", s(&cfg), "--out-dir", d]).status.code(),
        Some(0)
    );
    let branch = dir.path().join("branch.csv");
    let v = run(&["verify", "--config", s(&cfg), "--branch", s(&branch), "--out-dir", d]);
    assert_eq!(v.status.code(), Some(0), "{}", String::from_utf8_lossy(&v.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["all_hold"], true);

    let svg = dir.path().join("branch.svg");
    let p = run(&["export-plot", "--branch", s(&branch), "--out", s(&svg)]);
    assert_eq!(p.status.code(), Some(0));
    let text = std::fs::read_to_string(&svg).unwrap();
    let rows = read_branch_csv(&branch).unwrap();
    assert!(text.starts_with("<svg"));
    let solved = rows.iter().filter(|r| r.sup_norm > 0.0).count();
    assert_eq!(text.matches("class=\"point\"").count(), solved);
    assert_eq!(text.matches("class=\"bifurcation\"").count(), 1);
}

fn run_all(cfg: &Path, dir: &Path) -> Vec<(std::ffi::OsString, Vec<u8>)> {
    let d = s(dir);
    for cmd in ["eig", "check-hyp", "solve", "trace"] {
        assert_eq!(
            run(&[cmd, "--config", s(cfg), "--out-dir", d]).status.code(),
            Some(0),
            "{cmd}"
        );
    }
    let branch = dir.join("branch.csv");
    assert_eq!(
        run(&["verify", "--config", s(cfg), "--branch", s(&branch), "--out-dir", d])
            .status
            .code(),
        Some(0)
    );
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn repeated_runs_are_byte_identical() {
    let cfg = config("gaussian.json");
    let dir = tempfile::tempdir().unwrap();
    let first = run_all(&cfg, dir.path());
    let second = run_all(&cfg, dir.path());
    assert!(first.len() >= 8);
    assert_eq!(first.len(), second.len());
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        assert!(x == y, "{name:?} differs");
    }
}

#[test]
fn unknown_preset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = std::fs::read_to_string(config("gaussian.json"))
        .unwrap()
        .replace("\"gaussian\"", "\"lorentzian\"");
    std::fs::write(&bad, text).unwrap();
    let out = run(&["eig", "--config", s(&bad), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lorentzian"));
}

#[test]
fn output_directory_precedence() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let cfg = config("constant_p1.json");
    let out = bin()
        .args(["eig", "--config", s(&cfg)])
        .env("NLDISP_OUT_DIR", env_dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(env_dir.path().join("eig.json").exists());

    let out = bin()
        .args(["eig", "--config", s(&cfg), "--out-dir", s(flag_dir.path())])
        .env("NLDISP_OUT_DIR", env_dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(flag_dir.path().join("eig.json").exists());
    assert!(flag_dir.path().join("phi1.csv").exists());
}

#[test]
fn flag_overrides_change_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("constant_p1.json");
    let out = run(&[
        "solve",
        "--config",
        s(&cfg),
        "--out-dir",
        s(dir.path()),
        "--p",
        "2",
        "--lambda",
        "2.0",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("solve.json")).unwrap()).unwrap();
    assert!((v["sup_norm"].as_f64().unwrap() - 1.0).abs() < 1e-8, "{v}");
}

#[test]
fn lambda_below_threshold_has_no_solution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("constant_p1.json");
    let out = run(&[
        "solve",
        "--config",
        s(&cfg),
        "--out-dir",
        s(dir.path()),
        "--lambda",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("solve.json")).unwrap()).unwrap();
    assert_eq!(v["positive_solution"], false);
}
