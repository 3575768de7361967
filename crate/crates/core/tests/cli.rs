use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nls-gibbs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(dir: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

#[test]
fn kernels_pass_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["kernels", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(dir.path());
    assert_eq!(rep["schema_version"], 1);
    let rows = rep["rows"].as_array().unwrap();
    let verdicts = rows.iter().filter(|r| r["verdict"] != "INFO").count();
    assert!(verdicts >= 10);
    assert!(rows.iter().all(|r| r["verdict"] == "PASS" || r["verdict"] == "INFO"));
    for f in ["report.txt", "rows.csv"] {
        assert!(dir.path().join(f).exists());
    }
}

#[test]
fn identical_config_gives_identical_report() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (dir, workers) in dirs.iter().zip(["1", "2"]) {
        let out = run(&[
            "sample",
            "--samples",
            "300",
            "--seed",
            "5",
            "--workers",
            workers,
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a, b) = (report(dirs[0].path()), report(dirs[1].path()));
    // output_dir differs by construction
    let strip = |mut v: Value| {
        v["config"].as_object_mut().unwrap().remove("output_dir");
        v
    };
    assert_eq!(strip(a), strip(b));
    let ea = std::fs::read(dirs[0].path().join("ensemble.jsonl")).unwrap();
    let eb = std::fs::read(dirs[1].path().join("ensemble.jsonl")).unwrap();
    assert_eq!(ea, eb);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"experiment": "evolve", "N": 8, "times": [0.2], "seed": 3}"#).unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "evolve",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "4",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(&out_dir);
    assert_eq!(rep["config"]["N"], 8);
    assert_eq!(rep["config"]["seed"], 4);
    let csv = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,mass,J_or_E,hs_norm_s,l4_norm"));
}

#[test]
fn invalid_configs_are_rejected() {
    let out = run(&["invariance", "--kappa0", "-1", "--k", "5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("focusing"));

    let out = run(&["evolve", "--dt", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dt"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"experiment": "kernels", "colour": 3}"#).unwrap();
    let out = run(&["kernels", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn negative_control_exits_nonzero_and_is_marked() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "invariance",
        "--samples",
        "400",
        "--times",
        "0.5",
        "--observables",
        "sn_l4_pow4",
        "--negative-control",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("control_unweighted_sn_l4_pow4"));
    let rep = report(dir.path());
    let rows = rep["rows"].as_array().unwrap();
    let control = rows
        .iter()
        .find(|r| r["observable"] == "control_unweighted_sn_l4_pow4")
        .unwrap();
    assert_eq!(control["verdict"], "CONTROL");
    assert!(rows
        .iter()
        .filter(|r| r["observable"] == "sn_l4_pow4")
        .all(|r| r["verdict"] != "FAIL"));
}

#[test]
fn invariance_at_time_zero_passes_trivially() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "invariance",
        "--samples",
        "200",
        "--times",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}
