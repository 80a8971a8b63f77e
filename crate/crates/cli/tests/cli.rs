use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn drp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drp"))
        .args(args)
        .current_dir(dir)
        .env_remove("DRP_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) {
    let out = drp(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_reproducible_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--n", "100", "--seed", "7", "--out", "d.csv"], d);
    ok(&["simulate", "--n", "100", "--seed", "7", "--out", "e.csv"], d);
    let a = fs::read_to_string(d.join("d.csv")).unwrap();
    assert_eq!(a, fs::read_to_string(d.join("e.csv")).unwrap());
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines.len(), 101);
    assert_eq!(lines[0], "x1,x2,x3,x4,x5,a,y");
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 7));
    assert!(d.join("d.config.json").exists());
}

#[test]
fn simulate_test_table_columns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--n", "10", "--out", "t.csv", "--test", "--with-potential-outcomes"], d);
    let header = fs::read_to_string(d.join("t.csv")).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header.split(',').count(), 14);
    ok(&["simulate", "--n", "10", "--out", "u.csv", "--test", "--no-metadata"], d);
    let header = fs::read_to_string(d.join("u.csv")).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "x1,x2,x3,x4,x5,y1,y2,y3");
}

#[test]
fn estimate_rings_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--n", "1500", "--seed", "1", "--out", "d.csv"], d);
    ok(&["estimate", "--data", "d.csv", "--policy", "rings", "--delta", "0.1", "--out", "r.json"], d);
    let r = json(&d.join("r.json"));
    assert!(r["estimate"].as_f64().unwrap().is_finite());
    assert!(r["std_error"].as_f64().unwrap() > 0.0);
    let first = fs::read(d.join("r.json")).unwrap();
    fs::remove_file(d.join("r.json")).unwrap();
    ok(&["replay", "r.config.json"], d);
    assert_eq!(fs::read(d.join("r.json")).unwrap(), first);
}

#[test]
fn frozen_delta_grid_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--n", "1500", "--seed", "2", "--out", "d.csv"], d);
    ok(&["estimate", "--data", "d.csv", "--policy", "rings", "--delta", "0.05,0.2", "--out", "g.json"], d);
    let g = json(&d.join("g.json"));
    let v: Vec<f64> = g.as_array().unwrap().iter().map(|r| r["estimate"].as_f64().unwrap()).collect();
    assert!(v[1] <= v[0], "{v:?}");
}

#[test]
fn constant_rewards_estimate_their_value() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut csv = String::from("x1,a,y\n");
    for i in 0..300 {
        csv += &format!("{},{},0.5\n", i as f64 / 300.0, i % 2 + 1);
    }
    fs::write(d.join("c.csv"), csv).unwrap();
    ok(
        &["estimate", "--data", "c.csv", "--policy", "constant:1", "--delta", "0", "--propensity", "uniform", "--out", "c.json"],
        d,
    );
    let v = json(&d.join("c.json"))["estimate"].as_f64().unwrap();
    assert!((v - 0.5).abs() < 1e-6, "{v}");
}

#[test]
fn malformed_policy_is_a_located_single_line_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--n", "50", "--out", "d.csv"], d);
    fs::write(d.join("p.json"), "{\"depth\":1,\"nodes\":[{\"feature\":1,\"threshold\":0.5},{\"action\":1}]}").unwrap();
    let out = drp(&["estimate", "--data", "d.csv", "--policy", "p.json", "--delta", "0.1"], d);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    let line = err.lines().last().unwrap();
    let v: Value = serde_json::from_str(line).unwrap();
    assert_eq!(v["error"], "policy_parse");
    assert!(v["message"].as_str().unwrap().contains("nodes[2]"));
}

#[test]
fn learn_depth_zero_is_constant_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--n", "900", "--seed", "3", "--out", "d.csv"], d);
    for out in ["a", "b"] {
        ok(&["learn", "--data", "d.csv", "--delta", "0.1", "--depth", "0", "--out-dir", out], d);
    }
    let p = fs::read_to_string(d.join("a/policy.json")).unwrap();
    assert!(p.starts_with("{\"depth\":0,\"nodes\":[{\"action\":"), "{p}");
    assert_eq!(p, fs::read_to_string(d.join("b/policy.json")).unwrap());
    assert_eq!(fs::read(d.join("a/report.json")).unwrap(), fs::read(d.join("b/report.json")).unwrap());
    assert!(d.join("a/run_config.json").exists());
}

#[test]
fn evaluate_metrics_and_metadata_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--n", "2000", "--seed", "4", "--out", "t.csv", "--test"], d);
    ok(&["evaluate", "--test", "t.csv", "--policy", "rings", "--delta", "0", "--kl-sphere", "1", "--out", "e.json"], d);
    let e = json(&d.join("e.json"));
    let (v_bar, mean) = (e["v_bar"].as_f64().unwrap(), e["mean_reward"].as_f64().unwrap());
    assert!((v_bar - mean).abs() < 0.01, "{v_bar} {mean}");
    assert!((e["v_min"].as_f64().unwrap() - v_bar).abs() < 0.05);

    ok(&["simulate", "--n", "100", "--out", "bare.csv", "--test", "--no-metadata"], d);
    let out = drp(&["evaluate", "--test", "bare.csv", "--policy", "rings", "--delta", "0.1", "--kl-sphere", "2"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing_metadata"));
}

#[test]
fn env_seed_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = Command::new(env!("CARGO_BIN_EXE_drp"))
        .args(["simulate", "--n", "5", "--seed", "1", "--out", "s.csv"])
        .current_dir(d)
        .env("DRP_SEED", "42")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(json(&d.join("s.config.json"))["seed"], 42);
}
