use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn whisker(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_whisker"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

const QUICK: &str = r#"{
    "profiles": "smoke",
    "duration_s": 10,
    "repetitions": 1,
    "training": {"epochs": 2}
}"#;

#[test]
fn sweep_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = whisker(&["sweep", "--out", "o"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("o/sweep.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("f_b_hz,h_b_m,y_max_m,f_dom_hz"));
    assert_eq!(csv.lines().count(), 36);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/sweep_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["cells_within_one_bin"], 35);
    assert_eq!(summary["config"]["seed"], 2021);
}

#[test]
fn synth_then_train_eval_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUICK);
    let out = whisker(
        &["synth", "--config", &cfg, "--out", "o", "--seed", "9"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("o/dataset/manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["total_vectors"], 70);
    assert_eq!(manifest["config"]["seed"], 9);

    let out = whisker(
        &[
            "train-eval",
            "--config",
            &cfg,
            "--out",
            "o",
            "--data",
            "o/dataset",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("mean confusion matrix"), "{stdout}");
    assert!(dir.path().join("o/train_eval.json").exists());
}

#[test]
fn grad_check_reports_every_layer() {
    let dir = tempfile::tempdir().unwrap();
    let out = whisker(&["grad-check", "--out", "o"], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(
        stdout.lines().filter(|l| l.starts_with("layer ")).count(),
        6
    );
}

#[test]
fn exit_codes_follow_error_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| whisker(args, dir.path()).status.code();

    assert_eq!(code(&["bogus"]), Some(2));
    assert_eq!(code(&["sweep", "--config", "missing.json"]), Some(2));
    let unknown = write_config(dir.path(), r#"{"sed": 1}"#);
    assert_eq!(code(&["sweep", "--config", &unknown]), Some(2));

    let physics = write_config(dir.path(), r#"{"modal_damping": 1.5}"#);
    assert_eq!(code(&["sweep", "--config", &physics]), Some(3));

    let nyquist = write_config(dir.path(), r#"{"sweep": {"sample_rate_hz": 500}}"#);
    assert_eq!(
        code(&["sweep", "--config", &nyquist, "--out", "o"]),
        Some(3)
    );

    let diverge = write_config(
        dir.path(),
        r#"{"profiles": "smoke", "duration_s": 10, "repetitions": 1,
            "training": {"epochs": 3, "learning_rate": 1e6}}"#,
    );
    assert_eq!(
        code(&["train-eval", "--config", &diverge, "--out", "o"]),
        Some(4)
    );

    assert_eq!(
        code(&["train-eval", "--data", "nowhere", "--out", "o"]),
        Some(5)
    );
}

#[test]
fn help_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = whisker(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for verb in ["sweep", "synth", "train-eval", "speed-sweep", "grad-check"] {
        assert!(text.contains(verb), "{verb}");
    }
}
