use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn maxrm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxrm")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn csv_value(text: &str, key: &str) -> f64 {
    text.lines().find_map(|l| l.strip_prefix(&format!("{key},"))).unwrap().parse().unwrap()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(&maxrm(&["simulate", "--setting", "pwl", "--seed", "7", "--out", out], dir.path()));
    }
    let a = fs::read(dir.path().join("a/train.csv")).unwrap();
    assert!(a.starts_with(b"x1,y,env\n"));
    assert_eq!(a, fs::read(dir.path().join("b/train.csv")).unwrap());
    assert_eq!(fs::read(dir.path().join("a/test.csv")).unwrap(), fs::read(dir.path().join("b/test.csv")).unwrap());
}

#[test]
fn unknown_setting_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = maxrm(&["simulate", "--setting", "unknown", "--seed", "7", "--out", "d"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown setting"));
}

#[test]
fn eval_on_training_data_reproduces_the_fit_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&maxrm(&["simulate", "--setting", "pwl", "--seed", "3", "--out", "d"], p));
    ok(&maxrm(&["fit", "--train", "d/train.csv", "--strategy", "posthoc", "--risk", "mse", "--trees", "20", "--out", "m.json"], p));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("m.report.json")).unwrap()).unwrap();
    let z = report["in_sample_max_risk"].as_f64().unwrap();
    assert_eq!(report["trees"].as_array().unwrap().len(), 20);
    let csv = ok(&maxrm(&["eval", "--model", "m.json", "--test", "d/train.csv"], p));
    assert!((csv_value(&csv, "max_mse") - z).abs() <= 1e-9);
    // held-out data, for comparison with the in-sample value
    let test = ok(&maxrm(&["eval", "--model", "m.json", "--test", "d/test.csv"], p));
    let max = csv_value(&test, "max_mse");
    assert!(max > 10.0 && max < 30.0, "{max}");
}

#[test]
fn every_model_kind_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&maxrm(&["simulate", "--setting", "mixture", "--seed", "1", "--n-per-env", "150", "--out", "d"], p));
    for model in ["rf", "magging", "maxrm-tree", "maxrm"] {
        let file = format!("{model}.json");
        ok(&maxrm(&["fit", "--train", "d/train.csv", "--model", model, "--trees", "5", "--risk", "nrw", "--out", &file], p));
        let csv = ok(&maxrm(&["eval", "--model", &file, "--test", "d/test.csv", "--risk", "nrw"], p));
        assert!(csv_value(&csv, "max_nrw").is_finite());
        assert!(csv_value(&csv, "max_mse") >= csv_value(&csv, "mse_env2"));
    }
}

#[test]
fn regret_on_a_single_row_environment_names_it() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("t.csv"), "x1,y,env\n0.1,1,a\n0.2,2,a\n0.3,1,b\n").unwrap();
    let out = maxrm(&["fit", "--train", "t.csv", "--risk", "reg", "--min-leaf", "1", "--out", "m.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("environment 1"));
}

#[test]
fn mismatched_dimensions_fail() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&maxrm(&["simulate", "--setting", "pwl", "--seed", "1", "--out", "d"], p));
    ok(&maxrm(&["simulate", "--setting", "gp-noshift", "--seed", "1", "--n-per-env", "40", "--out", "g"], p));
    ok(&maxrm(&["fit", "--train", "d/train.csv", "--model", "rf", "--trees", "2", "--out", "m.json"], p));
    let out = maxrm(&["eval", "--model", "m.json", "--test", "g/test.csv"], p);
    assert_eq!(out.status.code(), Some(2));
    let out = maxrm(&["eval", "--model", "missing.json", "--test", "g/test.csv"], p);
    assert_eq!(out.status.code(), Some(2));
}

const SMALL: &str = r#"{
  "name": "small",
  "dgp": {"setting": "pwl", "n_total": 300},
  "repetitions": 3,
  "seed": 5,
  "methods": [
    {"name": "rf", "model": "rf", "trees": 5},
    {"name": "posthoc", "model": "maxrm", "strategy": "posthoc", "trees": 5},
    {"name": "broken", "model": "maxrm", "risk": "reg", "trees": 5, "hyperparams": {"min_leaf_size": 500}}
  ]
}"#;

#[test]
fn benchmark_writes_tables_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("small.json"), SMALL).unwrap();
    let out = maxrm(&["--workers", "2", "benchmark", "small.json", "--out", "r"], p);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("3 cell(s) failed"));
    let reps = fs::read_to_string(p.join("r/small_reps.csv")).unwrap();
    let agg = fs::read_to_string(p.join("r/small_aggregate.csv")).unwrap();
    assert!(p.join("r/small_max_mse.svg").exists());
    assert!(fs::read_to_string(p.join("r/small_runtime.csv")).unwrap().contains("broken"));

    // aggregate means equal the mean of the per-repetition rows
    let rows: Vec<(String, String, f64)> = reps
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[2].to_string(), f[3].parse().unwrap())
        })
        .collect();
    for line in agg.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let v: Vec<f64> = rows.iter().filter(|r| r.0 == f[0] && r.1 == f[1]).map(|r| r.2).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean - f[2].parse::<f64>().unwrap()).abs() < 1e-12);
    }

    // identical bytes on a second run
    ok(&maxrm(&["benchmark", "small.json", "--out", "r2"], p));
    assert_eq!(reps, fs::read_to_string(p.join("r2/small_reps.csv")).unwrap());
    assert_eq!(agg, fs::read_to_string(p.join("r2/small_aggregate.csv")).unwrap());
}

#[test]
fn invalid_benchmark_config_fails() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), SMALL.replace("\"repetitions\"", "\"reps\"")).unwrap();
    let out = maxrm(&["benchmark", "bad.json"], dir.path());
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let text = fs::read_to_string(&path).unwrap();
            maxrm_core::harness::ExperimentConfig::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert_eq!(n, 8);
}
