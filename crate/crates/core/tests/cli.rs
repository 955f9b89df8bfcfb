use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn sgr(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sgr"));
    cmd.args(args).env_remove("SGR_SOLVER_TOL");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("sgr runs")
}

/// The toy scenario with a small sample budget, written next to the outputs.
fn small_toy(dir: &Path) -> PathBuf {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(scenario("toy_1d.json")).unwrap()).unwrap();
    v["oracle"]["n_samples"] = 500.into();
    v["oracle"]["grid"]["step"] = 0.25.into();
    let path = dir.join("toy.json");
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn run_ok(args: &[&str]) -> String {
    let out = sgr(args, &[]);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn verify_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_toy(dir.path());
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        run_ok(&["verify", "--config", cfg, "--out", out.to_str().unwrap(), "--seed", "42"]);
    }
    for f in ["containment.json", "grid.csv", "region.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let rep: Value = serde_json::from_slice(&fs::read(a.join("containment.json")).unwrap()).unwrap();
    assert_eq!(rep["n_checked"], 500);
    assert_eq!(rep["seed"], 42);
    assert_eq!(rep["failures"].as_array().unwrap().len(), 0);
}

#[test]
fn simulate_writes_trajectory_and_edges() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    run_ok(&["simulate", "--config", scenario("two_agent.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next().unwrap(), "t,agent,x1,v1,lambda2,min_dist,W,Wdot,unsafe");
    assert!(traj.lines().count() > 10);
    assert!(out.join("edges.csv").exists());
}

#[test]
fn slice_contour_lies_on_the_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("slice");
    run_ok(&["slice", "--config", scenario("two_agent.json").to_str().unwrap(), "--out", out.to_str().unwrap(), "--slice-agent", "1", "--slice-dims", "1,2"]);
    let rep: Value = serde_json::from_slice(&fs::read(out.join("slice.json")).unwrap()).unwrap();
    assert!(rep["max_level_error"].as_f64().unwrap() < 1e-6);
    assert!(rep["unsafe_vertices"].as_array().unwrap().is_empty());
    let csv = fs::read_to_string(out.join("slice.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "contour,closed,u,v,abs_u,abs_v");

    let bad = sgr(&["slice", "--config", scenario("two_agent.json").to_str().unwrap(), "--out", out.to_str().unwrap(), "--slice-agent", "2"], &[]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn sweep_runs_every_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    run_ok(&["sweep", "--config", scenario("toy_1d.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.split(',').nth(2) == Some("true")));
    assert!(out.join("run_000").join("region.json").exists());
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: Value = serde_json::from_str(&fs::read_to_string(scenario("platoon.json")).unwrap()).unwrap();
    v["system"]["geometry"]["r_s"] = "far".into();
    let path = dir.path().join("bad.json");
    fs::write(&path, v.to_string()).unwrap();
    let out = sgr(&["certify", "--config", path.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("system.geometry.r_s"));
}

#[test]
fn solver_tolerance_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_toy(dir.path());
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("env");
    let bad = sgr(&["certify", "--config", cfg, "--out", out.to_str().unwrap()], &[("SGR_SOLVER_TOL", "tight")]);
    assert_eq!(bad.status.code(), Some(1));
    let ok = sgr(&["certify", "--config", cfg, "--out", out.to_str().unwrap()], &[("SGR_SOLVER_TOL", "1e-6")]);
    assert!(ok.status.success());
}
