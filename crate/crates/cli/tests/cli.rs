use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const CONFIG: &str = r#"{
  "dataset": {"source": "synth", "n_rows": 1000, "n_features": 6, "bias_strength": 0.8, "seed": 3},
  "model": {"hidden": [8, 8], "train": {"epochs": 20}},
  "search": {"max_iterations": 300},
  "seeds": [1],
  "output": {"dir": "runs"}
}"#;

fn fairdrop(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairdrop"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), CONFIG).unwrap();
    dir
}

#[test]
fn synth_writes_header_and_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(fairdrop(dir.path(), &["synth", "--rows", "250", "--features", "4", "--seed", "7", "--out", out]));
    }
    let a = std::fs::read(dir.path().join("a/synth.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/synth.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x0,x1,x2,x3,protected,label"));
    assert_eq!(lines.count(), 250);
    assert!(dir.path().join("a/synth_schema.json").exists());
}

#[test]
fn bias_strength_out_of_range_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fairdrop(dir.path(), &["synth", "--bias-strength", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn train_writes_one_model_and_report_per_seed() {
    let dir = workspace();
    ok(fairdrop(dir.path(), &["train", "--config", "cfg.json", "--seeds", "1,2,3"]));
    let runs = dir.path().join("runs");
    let mut weights = Vec::new();
    for s in 1..=3 {
        let model = json(runs.join(format!("model_seed{s}.json")));
        assert_eq!(model["layer_sizes"], serde_json::json!([6, 8, 8, 1]));
        weights.push(model["weights"].to_string());
        let report = json(runs.join(format!("baseline_seed{s}.json")));
        for split in ["validation", "test"] {
            for field in ["eod", "f1", "accuracy"] {
                assert!(report[split].get(field).is_some(), "{split}.{field}");
            }
        }
        assert_eq!(report["seed"], s);
    }
    weights.sort();
    weights.dedup();
    assert_eq!(weights.len(), 3);
}

#[test]
fn repair_echoes_default_cost_parameters() {
    let dir = workspace();
    ok(fairdrop(dir.path(), &["train", "--config", "cfg.json"]));
    ok(fairdrop(dir.path(), &["repair", "--config", "cfg.json"]));
    let runs = dir.path().join("runs");
    let result = json(runs.join("result_seed1.json"));
    assert_eq!(result["search_config"]["cost_params"]["p"], 3.0);
    assert_eq!(result["search_config"]["cost_params"]["t"], 0.98);
    let best = result["best_cost"].as_f64().unwrap();
    let initial = result["initial_cost"].as_f64().unwrap();
    assert!(best <= initial);
    let trace = std::fs::read_to_string(runs.join("trace_seed1.csv")).unwrap();
    assert_eq!(trace.lines().count(), 301);
    assert!(runs.join("summary.json").exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = workspace();
    ok(fairdrop(dir.path(), &["train", "--config", "cfg.json", "--epochs", "5", "--out", "other"]));
    let report = json(dir.path().join("other/baseline_seed1.json"));
    assert_eq!(report["config"]["model"]["train"]["epochs"], 5);
    assert_eq!(report["epochs"].as_array().unwrap().len(), 5);
    ok(fairdrop(
        dir.path(),
        &["repair", "--config", "cfg.json", "--out", "other", "--p", "1.5", "--algorithm", "RW", "--max-iterations", "50"],
    ));
    let result = json(dir.path().join("other/result_seed1.json"));
    assert_eq!(result["search_config"]["cost_params"]["p"], 1.5);
    assert_eq!(result["algorithm"], "RW");
    assert_eq!(result["iterations"], 50);
}

#[test]
fn sweep_emits_one_row_per_p_value() {
    let dir = workspace();
    ok(fairdrop(dir.path(), &["train", "--config", "cfg.json"]));
    ok(fairdrop(
        dir.path(),
        &["sweep", "--config", "cfg.json", "--max-iterations", "100", "--p-values", "0.5,1.0,1.5,2.0,2.5,3.0"],
    ));
    let text = std::fs::read_to_string(dir.path().join("runs/sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("p,seed,validation_eod,test_eod,success"));
    let ps: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ps, ["0.5", "1.0", "1.5", "2.0", "2.5", "3.0"]);
}

#[test]
fn oracle_dominates_the_repair_result() {
    let dir = workspace();
    ok(fairdrop(dir.path(), &["train", "--config", "cfg.json"]));
    ok(fairdrop(dir.path(), &["repair", "--config", "cfg.json"]));
    ok(fairdrop(
        dir.path(),
        &["oracle", "--config", "cfg.json", "--sa-result", "runs/result_seed1.json", "--dump-costs"],
    ));
    let report = json(dir.path().join("runs/oracle_seed1.json"));
    assert_eq!(report["census"]["total"], 2500);
    assert!(report["sa_comparison"]["delta"].as_f64().unwrap() >= 0.0);
    let dump = std::fs::read_to_string(dir.path().join("runs/costs_seed1.csv")).unwrap();
    assert_eq!(dump.lines().count(), 2501);
}

#[test]
fn oracle_refuses_oversized_spaces() {
    let dir = workspace();
    ok(fairdrop(dir.path(), &["train", "--config", "cfg.json"]));
    let out = fairdrop(dir.path(), &["oracle", "--config", "cfg.json", "--budget", "1000"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("2500"), "{stderr}");
    assert!(!dir.path().join("runs/oracle_seed1.json").exists());
}

#[test]
fn missing_model_is_an_error() {
    let dir = workspace();
    let out = fairdrop(dir.path(), &["repair", "--config", "cfg.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model_seed1.json"));
}

#[test]
fn zero_penalty_run_fails_the_floor_and_exits_three() {
    let dir = workspace();
    ok(fairdrop(dir.path(), &["train", "--config", "cfg.json"]));
    let out = fairdrop(dir.path(), &["repair", "--config", "cfg.json", "--p", "0", "--t", "0.999"]);
    assert_eq!(out.status.code(), Some(3));
    let result = json(dir.path().join("runs/result_seed1.json"));
    assert_eq!(result["success"], false);
    let summary = json(dir.path().join("runs/summary.json"));
    assert_eq!(summary["failed_seeds"], serde_json::json!([1]));
}
