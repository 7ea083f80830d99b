//! Command-line behavior: exit codes, output files and report shapes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;
use tempfile::TempDir;

fn zsslr(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zsslr"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ZSSLR_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn ok(cwd: &Path, args: &[&str]) -> String {
    let out = zsslr(cwd, args);
    assert!(
        out.status.success(),
        "zsslr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap_or_else(|_| panic!("{}", path.display()))).unwrap()
}

/// A small dataset in a fresh directory; keys in `extra` replace the
/// defaults.
fn fixture(extra: serde_json::Value) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = serde_json::json!({
        "n_classes": 16, "n_seen": 10, "n_unseen": 4, "samples_per_class": 6, "seen_holdout": 1
    });
    for (k, v) in extra.as_object().unwrap() {
        spec[k] = v.clone();
    }
    fs::write(dir.path().join("spec.json"), spec.to_string()).unwrap();
    ok(dir.path(), &["synth", "--spec", "spec.json", "--out", "data"]);
    dir
}

const DATA: &str = "data/manifest.json";

#[test]
fn train_writes_models_logs_and_summary() {
    let dir = fixture(json!({}));
    ok(dir.path(), &["train", "--dataset", DATA, "--output", "run", "--epochs", "200"]);
    let run = dir.path().join("run");
    for i in 0..5 {
        assert!(run.join(format!("model_{i}.json")).is_file());
        let log = fs::read_to_string(run.join(format!("loss_log_{i}.csv"))).unwrap();
        let losses: Vec<f64> = log.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert_eq!(log.lines().next(), Some("epoch,loss"));
        assert!(losses.last().unwrap() < &losses[0]);
    }
    let summary = json(run.join("train_summary.json"));
    assert_eq!(summary["repeats"].as_array().unwrap().len(), 5);
    assert!(summary["final_loss"]["std"].as_f64().unwrap() >= 0.0);
    assert!(summary["test_per_k"]["1"]["mean"].is_number());
    let seeds: Vec<u64> = summary["repeats"].as_array().unwrap().iter().map(|r| r["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, vec![0, 1, 2, 3, 4]);
    let echo = json(run.join("effective_config.json"));
    assert_eq!(echo["train"]["epochs"], 200);
}

#[test]
fn missing_manifest_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = zsslr(dir.path(), &["train", "--dataset", "absent.json", "--output", "run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("MissingFile"));
}

#[test]
fn output_root_comes_from_environment() {
    let dir = fixture(json!({}));
    let out = Command::new(env!("CARGO_BIN_EXE_zsslr"))
        .args(["baseline", "--dataset", DATA, "--trials", "100"])
        .current_dir(dir.path())
        .env("ZSSLR_OUTPUT_ROOT", "from_env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("from_env/baseline.json").is_file());
}

#[test]
fn eval_reports_gzsl_rows_and_baseline() {
    let dir = fixture(json!({"mode": "gzsl"}));
    ok(dir.path(), &["train", "--dataset", DATA, "--output", "run", "--repeats", "1", "--epochs", "200"]);
    let table = ok(
        dir.path(),
        &["eval", "--dataset", DATA, "--model", "run/model_0.json", "--output", "ev", "--random-baseline"],
    );
    for label in ["all", "seen", "unseen", "harmonic", "random"] {
        assert!(table.lines().any(|l| l.starts_with(label)), "{label} row missing:\n{table}");
    }
    assert!(table.lines().next().unwrap().contains("top-5"));
    let report = json(dir.path().join("ev/eval_report.json"));
    // 14 candidates, one sample per held-out seen class plus 6 per unseen class.
    let baseline = report["random_baseline"]["1"].as_f64().unwrap();
    assert!((baseline - 100.0 / 14.0).abs() < 1.0, "{baseline}");
    assert!(report["harmonic_per_k"]["1"].is_number());
}

#[test]
fn zsl_eval_only_ranks_unseen_classes() {
    let dir = fixture(json!({}));
    ok(dir.path(), &["train", "--dataset", DATA, "--output", "run", "--repeats", "1", "--epochs", "50"]);
    ok(dir.path(), &["predict", "--dataset", DATA, "--model", "run/model_0.json", "--output", "pr"]);
    let preds = json(dir.path().join("pr/predictions.json"));
    let unseen = ["c010", "c011", "c012", "c013"];
    for p in preds.as_array().unwrap() {
        let ranking = p["ranking"].as_array().unwrap();
        assert_eq!(ranking.len(), 4);
        assert!(ranking.iter().all(|r| unseen.contains(&r["class_id"].as_str().unwrap())));
    }
}

#[test]
fn eval_with_incompatible_model_exits_3() {
    let dir = fixture(json!({}));
    ok(dir.path(), &["train", "--dataset", DATA, "--output", "run", "--repeats", "1", "--epochs", "10"]);
    fs::write(dir.path().join("other.json"), r#"{"n_classes": 16, "n_seen": 10, "n_unseen": 4, "samples_per_class": 2, "attribute_count": 12}"#).unwrap();
    ok(dir.path(), &["synth", "--spec", "other.json", "--out", "other"]);
    let out = zsslr(
        dir.path(),
        &["eval", "--dataset", "other/manifest.json", "--model", "run/model_0.json", "--output", "ev"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("DimensionMismatch"));
}

#[test]
fn analyze_needs_attributes() {
    let dir = fixture(json!({}));
    ok(
        dir.path(),
        &["train", "--dataset", DATA, "--output", "run", "--repeats", "1", "--epochs", "10", "--embedding", "text", "--d-t", "4"],
    );
    let out = zsslr(dir.path(), &["analyze", "--dataset", DATA, "--model", "run/model_0.json", "--output", "an", "--correct"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn correct_analysis_covers_every_unseen_class() {
    let dir = fixture(json!({"noise_sigma": 0.0, "n_classes": 60, "n_seen": 45, "n_unseen": 10, "samples_per_class": 4}));
    ok(dir.path(), &["train", "--dataset", DATA, "--output", "run", "--repeats", "1"]);
    ok(dir.path(), &["eval", "--dataset", DATA, "--model", "run/model_0.json", "--output", "ev"]);
    let top1 = json(dir.path().join("ev/eval_report.json"))["per_k"]["1"].as_f64().unwrap();
    assert_eq!(top1, 100.0, "fixture model should be perfect");
    ok(dir.path(), &["analyze", "--dataset", DATA, "--model", "run/model_0.json", "--output", "an", "--correct"]);
    let report = json(dir.path().join("an/influence_correct.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 10);
    assert!(report["omitted"].as_array().unwrap().is_empty());
    let csv = fs::read_to_string(dir.path().join("an/influence_correct.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.starts_with("subject,support,attr_0,"));
    let affil = fs::read_to_string(dir.path().join("an/influence_correct_affiliation.csv")).unwrap();
    assert!(affil.lines().skip(1).all(|l| l.split(',').skip(2).all(|f| f == "0" || f == "1")));
}

#[test]
fn confusion_analysis_keeps_top_four() {
    let dir = fixture(json!({"noise_sigma": 1.5, "n_classes": 30, "n_seen": 16, "n_unseen": 12}));
    ok(dir.path(), &["train", "--dataset", DATA, "--output", "run", "--repeats", "1", "--epochs", "100"]);
    ok(dir.path(), &["analyze", "--dataset", DATA, "--model", "run/model_0.json", "--output", "an", "--confusions", "4"]);
    let report = json(dir.path().join("an/influence_confusions.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let support: Vec<u64> = rows.iter().map(|r| r["support"].as_u64().unwrap()).collect();
    assert!(support.windows(2).all(|w| w[0] >= w[1]));
    assert!(rows[0]["subject"]["ground_truth"].is_string());
}

#[test]
fn sweep_rows_beat_chance() {
    let dir = fixture(json!({"n_classes": 24, "n_seen": 14, "n_unseen": 4}));
    ok(
        dir.path(),
        &["sweep", "--dataset", DATA, "--embedding", "combined", "--param", "d_t", "--values", "2,8", "--repeats", "2", "--epochs", "300", "--output", "sw"],
    );
    let csv = fs::read_to_string(dir.path().join("sw/sweep_d_t.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("value,mean_val_top1,stddev"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|f| f.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2);
    // Six validation classes, so chance is 100/6.
    assert!(rows.iter().all(|r| r[1] > 100.0 / 6.0), "{rows:?}");
}

#[test]
fn sweep_at_text_width_matches_unreduced_training() {
    let dir = fixture(json!({}));
    let base = ["--dataset", DATA, "--embedding", "text", "--repeats", "1", "--epochs", "50"];
    let mut sweep = vec!["sweep"];
    sweep.extend(base);
    sweep.extend(["--param", "d_t", "--values", "8", "--output", "sw"]);
    let printed = ok(dir.path(), &sweep);
    assert_eq!(fs::read_to_string(dir.path().join("sw/sweep_d_t.csv")).unwrap().lines().count(), 2);

    let mut train = vec!["train"];
    train.extend(base);
    train.extend(["--d-t", "8", "--output", "tr"]);
    ok(dir.path(), &train);
    let model = json(dir.path().join("tr/model_0.json"));
    assert!(model["M"].is_null());
    let val = json(dir.path().join("tr/train_summary.json"))["validation_per_k"]["1"]["mean"].as_f64().unwrap();
    assert!(printed.contains(&format!("validation top-1 {val:.1}")), "{printed} vs {val}");
}

#[test]
fn sweep_d_t_rejects_attribute_mode() {
    let dir = fixture(json!({}));
    let out = zsslr(dir.path(), &["sweep", "--dataset", DATA, "--param", "d_t", "--values", "4", "--output", "sw"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn rerun_is_byte_identical() {
    let dir = fixture(json!({}));
    for out in ["a", "b"] {
        ok(dir.path(), &["train", "--dataset", DATA, "--output", out, "--repeats", "2", "--epochs", "30"]);
    }
    for f in ["model_0.json", "model_1.json", "loss_log_1.csv", "train_summary.json"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}
