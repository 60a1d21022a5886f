use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_confound-audit"));
    c.env_remove("CONFOUND_AUDIT_THREADS");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const SMALL_RUN: &str = r#"{
  "seed": 11,
  "synth": { "n_population": 12000 },
  "forest": { "n_trees": 20 },
  "stratified": { "min_per_class": 2 },
  "probe": { "subsample_per_class": 200, "calibration_size": 400, "weak": { "k_max": 6, "nn_components": 4 } }
}"#;

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"seed": 1, "not_a_field": true}"#).unwrap();
    let out = run(dir.path(), &["report", "--config", "bad.json", "--out-dir", "out"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_a_field"));
}

#[test]
fn report_bundle_and_manifest_rerun_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.json"), SMALL_RUN).unwrap();
    ok(d, &["report", "--config", "run.json", "--out-dir", "a", "--manifest-out", "m.json"]);
    for f in ["roc", "eu", "strata", "probe"] {
        assert!(d.join(format!("a/{f}.svg")).exists(), "{f}.svg");
        assert!(d.join(format!("a/{f}.csv")).exists(), "{f}.csv");
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 11);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);

    ok(d, &["--threads", "1", "report", "--from-manifest", "m.json", "--out-dir", "b"]);
    let mut n = 0;
    for entry in fs::read_dir(d.join("a")).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "csv") {
            let other = d.join("b").join(p.file_name().unwrap());
            assert_eq!(fs::read(&p).unwrap(), fs::read(other).unwrap(), "{}", p.display());
            n += 1;
        }
    }
    assert!(n >= 6);
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.json"), SMALL_RUN).unwrap();
    ok(d, &["--seed", "5", "report", "--config", "run.json", "--out-dir", "o", "--manifest-out", "m.json"]);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 5);
}

#[test]
fn synth_train_predict_eval_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "2", "synth", "--n-population", "6000", "--out", "c.csv", "--features-out", "f.csv"]);
    ok(d, &[
        "--seed", "2", "baseline", "train", "--cohort", "c.csv", "--features", "f.csv", "--kind", "features",
        "--n-trees", "10", "--model-out", "model.json",
    ]);
    ok(d, &["baseline", "predict", "--cohort", "c.csv", "--features", "f.csv", "--model", "model.json", "--out", "s.csv"]);
    ok(d, &["eval", "--cohort", "c.csv", "--scores", "s.csv", "--out", "e.json", "--roc-out", "roc.csv"]);
    let e: Value = serde_json::from_str(&fs::read_to_string(d.join("e.json")).unwrap()).unwrap();
    let auc = e["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert!(e["ci"]["lower"].as_f64().unwrap() <= auc);
    assert!(fs::read_to_string(d.join("roc.svg")).unwrap().starts_with("<svg"));

    ok(d, &["match", "--cohort", "c.csv", "--scores", "s.csv", "--out", "m.csv", "--balance-out", "b.json"]);
    let b: Value = serde_json::from_str(&fs::read_to_string(d.join("b.json")).unwrap()).unwrap();
    for s in b["strata"].as_array().unwrap() {
        assert!(s["kept_per_class"].as_u64().unwrap() <= s["n_pos"].as_u64().unwrap().min(s["n_neg"].as_u64().unwrap()));
    }
}

#[test]
fn utility_point_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["utility", "--r-t", "1.5", "--epsilon", "0.2", "--prevalence", "0.05", "--sensitivity", "1", "--specificity", "1"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["expected_utility"].as_f64().unwrap() - 0.065).abs() < 1e-12);
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["eval", "--cohort", "nope.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: data:"));
}

#[test]
fn threads_env_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--threads", "2", "utility", "--prevalence", "0.1", "--sensitivity", "0.5", "--specificity", "0.5"];
    let out = bin().current_dir(dir.path()).env("CONFOUND_AUDIT_THREADS", "zero").args(args).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("CONFOUND_AUDIT_THREADS"));
    let out = bin()
        .current_dir(dir.path())
        .env("CONFOUND_AUDIT_THREADS", "1")
        .args(["--manifest-out", "m.json"])
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success());
    let m: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(m["threads"], 1);
}

#[test]
fn bad_argument_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["eval", "--cohort", "x.csv", "--ci", "bootstrap"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(2));
}
