use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn permfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_permfuse")).args(args).output().expect("spawn permfuse")
}

fn ok_json(out: Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn synth(dir: &Path) -> String {
    let cfg = dir.join("synth.json");
    std::fs::write(
        &cfg,
        r#"{"grid": {"bounds": {"x_min": 0, "x_max": 1900, "y_min": 0, "y_max": 1900}, "spacing": 100}, "wells": 12}"#,
    )
    .unwrap();
    let data = dir.join("data");
    let v = ok_json(permfuse(&["synth", "--config", cfg.to_str().unwrap(), "--out", data.to_str().unwrap(), "--seed", "3"]));
    assert_eq!(v["wells"], 12);
    assert_eq!(v["grid_points"], 400);
    data.join("run.json").to_str().unwrap().to_string()
}

const FAST: [&str; 6] = ["--generations", "4", "--population", "8", "--epochs", "2"];

fn stage(cmd: &str, run: &str, extra: &[&str]) -> Value {
    let mut args = vec![cmd, "--config", run];
    args.extend_from_slice(&FAST);
    args.extend_from_slice(extra);
    ok_json(permfuse(&args))
}

#[test]
fn full_workflow_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let run = synth(dir.path());
    let out = dir.path().join("data/out");

    let v = stage("ingest", &run, &[]);
    assert_eq!(v["wells"], 12);
    assert!(out.join("wells_ingested.csv").exists());
    let v = stage("qq-transform", &run, &[]);
    assert!(v["ks_distance"].as_f64().unwrap() <= 1.0);

    let pure = stage("optimize", &run, &[]);
    assert_eq!(pure["params"]["w_s"], 0.0);
    assert!(out.join("pure_perm.csv").exists());

    let v = stage("train-seismic", &run, &[]);
    assert!(v["samples"].as_u64().unwrap() > 12);
    let v = stage("predict-seismic", &run, &[]);
    assert_eq!(v["failed_points"], 0);

    let complete = stage("complete-fuse", &run, &["--warm-start"]);
    assert!(complete["params"]["w_s"].as_f64().unwrap() >= 0.1);

    let v = stage("fuse", &run, &["--with-seismic"]);
    assert_eq!(v["sources"]["seismic"], true);

    let v = stage("report", &run, &[]);
    let hash = v["config_sha256"].as_str().unwrap().to_string();
    let csv = std::fs::read_to_string(out.join("report/metrics.csv")).unwrap();
    assert!(csv.starts_with("metric,pure_all,pure_excluded,complete_all,complete_excluded"));
    assert_eq!(stage("report", &run, &[])["config_sha256"], hash);

    let v = stage("ablate", &run, &["--exclude", "W001,W002"]);
    assert_eq!(v["excluded"].as_array().unwrap().len(), 2);
    assert!(out.join("ablation/diff_complete.csv").exists());
    let csv = std::fs::read_to_string(out.join("report/metrics.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().split(',').all(|c| !c.is_empty()));
}

#[test]
fn stages_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = synth(dir.path());
    let out = dir.path().join("data/out");
    stage("optimize", &run, &[]);
    let first = std::fs::read(out.join("pure_perm.csv")).unwrap();
    stage("optimize", &run, &[]);
    assert_eq!(first, std::fs::read(out.join("pure_perm.csv")).unwrap());
}

#[test]
fn errors_are_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = permfuse(&["optimize", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert!(!out.status.success());
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "io");

    let run = synth(dir.path());
    let out = permfuse(&["train-seismic", "--config", &run]);
    assert!(!out.status.success());
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "io");

    let out = permfuse(&["ablate", "--config", &run, "--exclude", "nope"]);
    assert!(!out.status.success());

    let out = permfuse(&["optimize", "--config", &run, "--percentile", "1.5"]);
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "invalid_config");
}
