//! Drives the installed binary through every verb on a copy of the bundled
//! demo data, checking artifacts and exit codes.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trendlab"))
}

fn light_config(dir: &Path) -> std::path::PathBuf {
    let data_src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic.csv");
    let data = dir.join("synthetic.csv");
    fs::copy(&data_src, &data).expect("bundled demo data present");
    let cfg = String::from(
        r#"
seed = 7
out_dir = "out"

[[stocks]]
name = "synthetic"
csv = "synthetic.csv"

[split]
train_end = "2018-11-29"

[test]
windows = 2
window_len = 7

[windows]
stride = 6

[forecaster]
layers = 1
hidden = 8
epochs = 3

[classifier]
kinds = ["forest", "svm"]

[classifier.config.forest]
n_trees = 20

[classifier.config.svm]
epochs = 30
"#,
    );
    let path = dir.join("demo.toml");
    fs::write(&path, cfg).unwrap();
    path
}

fn run_verb(cfg: &Path, verb: &str) -> std::process::Output {
    bin()
        .arg(verb)
        .arg("--config")
        .arg(cfg)
        .output()
        .expect("binary runs")
}

#[test]
fn stage_verbs_produce_their_artifacts_in_order() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = light_config(tmp.path());
    let out = tmp.path().join("out/synthetic");

    // Stages that depend on a missing upstream artifact fail cleanly.
    let premature = run_verb(&cfg, "forecast");
    assert!(!premature.status.success());
    assert!(String::from_utf8_lossy(&premature.stderr).contains("train-forecaster"));

    let steps: &[(&str, &[&str])] = &[
        ("ingest", &["ohlcv.csv", "summary.csv"]),
        ("features", &["indicators.csv", "features.csv"]),
        ("label", &["labels.csv"]),
        ("train-forecaster", &["forecaster.json", "loss_curve.csv"]),
        ("forecast", &["forecast.csv"]),
        (
            "train-classifier",
            &["classifier_forest.json", "classifier_svm.json"],
        ),
        (
            "classify",
            &["predictions_forest.csv", "predictions_svm.csv"],
        ),
        ("evaluate", &["evaluation_forest.txt", "evaluation_svm.txt"]),
        ("simulate", &["simulated_study.csv"]),
    ];
    for (verb, artifacts) in steps {
        let output = run_verb(&cfg, verb);
        assert!(
            output.status.success(),
            "{verb} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        for artifact in *artifacts {
            assert!(
                out.join(artifact).exists(),
                "{verb} did not write {artifact}"
            );
        }
    }

    let eval_text = fs::read_to_string(out.join("evaluation_forest.txt")).unwrap();
    for key in [
        "accuracy:",
        "weighted_f1:",
        "ks_statistic:",
        "ks_p_value:",
        "kl_entropy:",
    ] {
        assert!(eval_text.contains(key));
    }

    // The study-mode simulation re-exports as parseable OHLCV.
    let sim = fs::read_to_string(out.join("simulated_study.csv")).unwrap();
    assert!(sim.starts_with("Date,Open,High,Low,Close,Adj Close,Volume"));
}

#[test]
fn run_and_tables_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = light_config(tmp.path());

    // tables before any run is an error with a nonzero exit.
    let premature = run_verb(&cfg, "tables");
    assert!(!premature.status.success());

    let run = run_verb(&cfg, "run");
    assert!(
        run.status.success(),
        "run failed: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("run synthetic/forest"));
    assert!(stdout.contains("run synthetic/svm"));

    let tables_dir = tmp.path().join("out/tables");
    let before = fs::read_to_string(tables_dir.join("accuracy_overall.csv")).unwrap();
    assert!(before.starts_with("stock,forest,svm"));

    fs::remove_dir_all(&tables_dir).unwrap();
    let tables = run_verb(&cfg, "tables");
    assert!(tables.status.success());
    let after = fs::read_to_string(tables_dir.join("accuracy_overall.csv")).unwrap();
    assert_eq!(
        before, after,
        "tables must rebuild identically from runs.json"
    );
}

#[test]
fn bad_config_fails_before_any_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = light_config(tmp.path());
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("\"svm\"", "\"mystery\"");
    fs::write(&cfg, text).unwrap();

    let output = run_verb(&cfg, "run");
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("error"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn seed_override_changes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = light_config(tmp.path());

    let output = bin()
        .args(["train-forecaster", "--config"])
        .arg(&cfg)
        .args(["--seed", "1", "--out"])
        .arg(tmp.path().join("s1"))
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let output = bin()
        .args(["train-forecaster", "--config"])
        .arg(&cfg)
        .args(["--seed", "2", "--out"])
        .arg(tmp.path().join("s2"))
        .output()
        .unwrap();
    assert!(output.status.success());

    let a = fs::read_to_string(tmp.path().join("s1/synthetic/loss_curve.csv")).unwrap();
    let b = fs::read_to_string(tmp.path().join("s2/synthetic/loss_curve.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn unknown_stock_filter_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = light_config(tmp.path());
    let output = bin()
        .args(["ingest", "--config"])
        .arg(&cfg)
        .args(["--stock", "ghost"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("ghost"));
}
