// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn dpls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpls"))
        .args(args)
        .env_remove("DPLS_JOBS")
        .output()
        .expect("binary runs")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn repeated_runs_write_identical_csv() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.csv"), path(&dir, "b.csv"));
    let first = dpls(&["run", "--trials", "2", "--seed", "7", "--out", &a]);
    assert!(first.status.success(), "{}", stderr(&first));
    let second = dpls(&["run", "--trials", "2", "--seed", "7", "--out", &b, "--jobs", "3"]);
    assert!(second.status.success(), "{}", stderr(&second));
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("#schema=dpls-trials/1"));
    assert_eq!(
        lines.next(),
        Some("trial,solver,n,m,eps,delta,mu,error_sq,mean_agent_error_sq,iters,failed")
    );
    assert_eq!(lines.count(), 2);
}

#[test]
fn different_seeds_differ() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.csv"), path(&dir, "b.csv"));
    assert!(dpls(&["run", "--trials", "2", "--seed", "7", "--out", &a]).status.success());
    assert!(dpls(&["run", "--trials", "2", "--seed", "8", "--out", &b]).status.success());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

fn write_singular_fixture(file: &Path) {
    let mut text = String::from("3 4\n");
    for i in 0..4 {
        text.push_str("1 1 0 1 0 0\n");
        text.push_str(&format!("{i} 0 0\n"));
    }
    fs::write(file, text).unwrap();
}

#[test]
fn singular_fixture_marks_rows_failed_but_exits_zero() {
    let dir = TempDir::new().unwrap();
    let fixture = dir.path().join("singular.txt");
    write_singular_fixture(&fixture);
    let out = path(&dir, "out.csv");
    let o = dpls(&[
        "run",
        "--solver",
        "ac-baseline",
        "--n",
        "4",
        "--problem",
        fixture.to_str().unwrap(),
        "--noise-off",
        "--no-validate",
        "--trials",
        "3",
        "--seed",
        "1",
        "--out",
        &out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.ends_with(",1")), "{text}");
}

#[test]
fn singular_fixture_is_rejected_when_validating() {
    let dir = TempDir::new().unwrap();
    let fixture = dir.path().join("singular.txt");
    write_singular_fixture(&fixture);
    let o = dpls(&[
        "run",
        "--solver",
        "ac-baseline",
        "--n",
        "4",
        "--problem",
        fixture.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        &path(&dir, "out.csv"),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn infeasible_calibration_exits_nonzero_without_output() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "gt.csv");
    let o = dpls(&["run", "--solver", "gt", "--trials", "1", "--seed", "1", "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--no-validate"), "{}", stderr(&o));
    assert!(!Path::new(&out).exists());
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(dpls(&["run", "--bogus"]).status.code(), Some(2));
    assert_eq!(dpls(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(dpls(&["run", "--solver", "nope", "--out", "x"]).status.code(), Some(2));
}

#[test]
fn missing_seed_is_an_error() {
    let dir = TempDir::new().unwrap();
    let o = dpls(&["run", "--trials", "1", "--out", &path(&dir, "x.csv")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "# experiment\nsolver = dishuf-ac\ntrials = 3\nseed = 5\neps = 2\n").unwrap();
    let out = path(&dir, "out.csv");
    let o = dpls(&["run", "--config", cfg.to_str().unwrap(), "--eps", "5", "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.split(',').nth(4) == Some("5")), "{text}");
}

#[test]
fn trajectory_writes_decreasing_curve() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "traj.csv");
    let o = dpls(&["trajectory", "--seed", "3", "--no-validate", "--gt-rounds", "600", "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("#schema=dpls-trajectory/1"));
    assert_eq!(lines.next(), Some("round,mean_sq_error"));
    let values: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 601);
    assert!(values[600] < values[0]);
}

#[test]
fn sweep_eps_groups_by_level() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "eps.csv");
    let o = dpls(&["sweep-eps", "--seed", "2", "--trials", "2", "--eps-list", "1,10", "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let eps: Vec<&str> = text.lines().skip(2).map(|l| l.split(',').nth(4).unwrap()).collect();
    assert_eq!(eps, ["1", "1", "10", "10"]);
}

#[test]
fn calibrate_prints_key_values() {
    let o = dpls(&["calibrate", "--seed", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    for key in ["kappa_bar=", "gt_delta_floor=", "gt_feasible=false", "dishuf_ln_sigma_eta=", "dishuf_key_bits="] {
        assert!(text.contains(key), "{key} missing in {text}");
    }
    assert!(text.lines().all(|l| l.contains('=')));
}

#[test]
fn paillier_selftest_passes() {
    let o = dpls(&["paillier-selftest", "--round-trips", "20", "--seed", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().contains("failures=0"));
}

#[test]
fn verify_rejects_unknown_filter() {
    let o = dpls(&["verify", "--only", "no-such-criterion"]);
    assert_eq!(o.status.code(), Some(1));
}
