use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nsfem(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsfem"))
        .args(args)
        .arg("--output-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn resolved_config_is_echoed_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsfem(&["infsup", "--pair", "taylor-hood", "--levels", "2", "--base-n", "2"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("nu = 1.0"), "{s}");
    assert!(s.contains("coupling = \"dt_h2\""), "{s}");
    assert!(s.contains("t_final = 1.0"), "{s}");
    assert!(s.contains("pair = \"taylor-hood\""), "{s}");
}

#[test]
fn negative_time_step_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsfem(&["solve", "--dt", "-0.1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dt must be positive"), "{}", stderr(&o));
}

#[test]
fn missing_time_step_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsfem(&["stability"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`dt`"), "{}", stderr(&o));
}

#[test]
fn conflicting_duration_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsfem(&["solve", "--dt", "0.1", "--n-steps", "3", "--t-final", "1"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("cannot be used with"), "{}", stderr(&o));
}

#[test]
fn file_values_yield_to_flags_and_unknown_keys_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[problem]\nnu = 0.01\n\n[mesh]\nbase_n = 2\nlevels = 2\n").unwrap();
    let o = nsfem(&["infsup", "--config", cfg.to_str().unwrap(), "--nu", "1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("nu = 1.0"));
    assert!(stdout(&o).contains("base_n = 2"));

    fs::write(&cfg, "[problem]\nviscosity = 0.01\n").unwrap();
    let o = nsfem(&["infsup", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("viscosity"), "{}", stderr(&o));
}

#[test]
fn zero_data_stability_passes_with_zero_left_sides() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsfem(&["stability", "--solution", "zero", "--n", "4", "--dt", "0.1", "--n-steps", "5"], dir.path());
    assert!(o.status.success(), "{}\n{}", stdout(&o), stderr(&o));
    let report = json(&dir.path().join("stability.json"));
    let result = &report["result"];
    assert_eq!(result["pass"], Value::Bool(true));
    assert_eq!(result["energy_inequality"]["left"].as_f64(), Some(0.0));
    for step in result["pressure_bound"]["steps"].as_array().unwrap() {
        assert_eq!(step["left"].as_f64(), Some(0.0));
    }
    assert!(dir.path().join("constants.json").exists());
}

#[test]
fn unstable_pair_is_diagnosed_not_failed() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsfem(&["infsup", "--pair", "p1p1", "--levels", "3"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("unstable pair"), "{}", stdout(&o));
    let rows = json(&dir.path().join("constants.json"))["result"].as_array().unwrap().clone();
    let alphas: Vec<f64> = rows.iter().map(|r| r["alpha"].as_f64().unwrap()).collect();
    assert_eq!(alphas.len(), 3);
    assert!(alphas.windows(2).all(|w| w[1] < 0.9 * w[0]), "{alphas:?}");
}

#[test]
fn convergence_passes_and_underintegration_fails_on_rates() {
    let args = ["convergence", "--pair", "taylor-hood", "--coupling", "dt_h", "--base-n", "4", "--levels", "3"];
    let dir = tempfile::tempdir().unwrap();
    let o = nsfem(&args, dir.path());
    assert!(o.status.success(), "{}\n{}", stdout(&o), stderr(&o));
    let csv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert!(csv.starts_with("# nsfem "));
    assert!(csv.lines().nth(2).unwrap().starts_with("level,n,h,dt"));

    let bad = tempfile::tempdir().unwrap();
    let mut debug: Vec<&str> = args.to_vec();
    debug.extend(["--quad-degree", "1"]);
    let o = nsfem(&debug, bad.path());
    assert_eq!(o.status.code(), Some(1), "{}\n{}", stdout(&o), stderr(&o));
    assert!(stderr(&o).contains("rate"), "{}", stderr(&o));
}

#[test]
fn outputs_are_deterministic_and_self_describing() {
    let args = ["equivalence", "--pair", "mini", "--base-n", "2", "--levels", "2", "--samples", "10", "--seed", "7"];
    let a = tempfile::tempdir().unwrap();
    let fa = a.path().join("constants.json");
    let mut bytes = Vec::new();
    for _ in 0..2 {
        let o = nsfem(&args, a.path());
        assert!(o.status.success(), "{}", stderr(&o));
        bytes.push(fs::read(&fa).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    let v = json(&fa);
    assert_eq!(v["version"].as_str(), Some(env!("CARGO_PKG_VERSION")));
    assert_eq!(v["config"]["command"].as_str(), Some("equivalence"));
    assert_eq!(v["config"]["seed"].as_u64(), Some(7));

    let o = nsfem(&["project-stability", "--base-n", "2", "--levels", "3", "--samples", "5"], a.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(a.path().join("projection.csv")).unwrap();
    assert!(csv.contains("\"command\":\"project-stability\""));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn solve_writes_trajectory_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsfem(&["solve", "--pair", "mini", "--n", "4", "--dt", "0.25"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 6);
    let summary = json(&dir.path().join("solve.json"));
    assert_eq!(summary["result"]["n_steps"].as_u64(), Some(4));
    assert!(summary["result"]["final_errors"]["l2_u"].as_f64().unwrap() < 1e-2);
}

#[test]
fn unstable_pair_cannot_be_time_stepped() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsfem(&["solve", "--pair", "p1p1", "--n", "4", "--dt", "0.1", "--n-steps", "1"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}
