mod common;

use common::{code, describe, run};

#[test]
fn train_without_seed_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["train", "--samples", "x.jsonl", "--variant", "nn"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn unknown_subcommand_and_flag_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["fly"])), 1);
    assert_eq!(code(&run(dir.path(), &["gradcheck", "--bogus"])), 1);
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"net": {"units9": 3}}"#).unwrap();
    let out = run(dir.path(), &["gradcheck", "--config", "c.json", "--out-dir", "g"]);
    assert_eq!(code(&out), 1, "{}", describe(&["gradcheck"], &out));
    // the failed run still leaves its manifest
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("g/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "error");
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["extract", "--input", "absent.csv", "--out-dir", "e"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn gradcheck_reports_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["gradcheck", "--cell", "lstm", "--out-dir", "g"];
    let out = run(dir.path(), &args);
    assert_eq!(code(&out), 0, "{}", describe(&args, &out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("max relative error"), "{stdout}");
    let report: perl_core::neuralnet::GradCheckReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("g/gradcheck.json")).unwrap()).unwrap();
    assert!(report.max_relative_error < 1e-4);
}

#[test]
fn extract_count_matches_windowing() {
    let dir = tempfile::tempdir().unwrap();
    let steps: [&[&str]; 2] = [
        &["synth", "--seed", "1", "--platoons", "2", "--steps", "80", "--out-dir", "s"],
        &["extract", "--input", "s/corpus.csv", "--out-dir", "e"],
    ];
    for args in steps {
        let out = run(dir.path(), args);
        assert_eq!(code(&out), 0, "{}", describe(args, &out));
    }
    let file = perl_core::ingest::read_samples(dir.path().join("e/samples.jsonl")).unwrap();
    // 2 platoons, 3 egos with K-1 = 3 leaders among 6 vehicles, 80 - (50 + 1) + 1 windows each
    assert_eq!(file.samples.len(), 2 * 3 * 30);
}

#[test]
fn physics_variant_predicts_from_a_calibration_report() {
    let dir = tempfile::tempdir().unwrap();
    let steps: [&[&str]; 5] = [
        &["synth", "--seed", "2", "--generator", "newell_shift", "--platoons", "2", "--out-dir", "s"],
        &["extract", "--input", "s/corpus.csv", "--out-dir", "e"],
        &["calibrate", "--samples", "e/samples.jsonl", "--seed", "2", "--model", "newell", "--repetitions", "1", "--out-dir", "c"],
        &["predict", "--samples", "e/samples.jsonl", "--variant", "physics", "--physics", "c/calibration.json", "--out-dir", "p"],
        &["evaluate", "--samples", "e/samples.jsonl", "--predictions", "p/predictions.json", "--out-dir", "v"],
    ];
    for args in steps {
        let out = run(dir.path(), args);
        assert_eq!(code(&out), 0, "{}", describe(args, &out));
    }
    let report: perl_core::eval::EvalReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("v/eval_report.json")).unwrap()).unwrap();
    assert!(report.mse_a_test < 1e-10, "{}", report.mse_a_test);
}

#[test]
fn training_the_physics_variant_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["train", "--seed", "1", "--variant", "physics", "--samples", "x.jsonl"]);
    assert_eq!(code(&out), 1);
}
