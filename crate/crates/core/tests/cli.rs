use std::path::Path;
use std::process::{Command, Output};

fn mixeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixeval"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn synthetic(dir: &Path, n: &str) -> String {
    let path = dir.join("survey.csv").to_string_lossy().into_owned();
    let out = mixeval(&[
        "generate-synthetic",
        "--n",
        n,
        "--seed",
        "3",
        "--output",
        &path,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

const THRESHOLDS: [&str; 10] = [
    "--threshold",
    "PA=1e6",
    "--threshold",
    "BA=1e6",
    "--threshold",
    "GO=1e6",
    "--threshold",
    "MG=1e6",
    "--threshold",
    "RS=1e6",
];

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&mixeval(&["--help"])), 0);
    assert_eq!(code(&mixeval(&["--version"])), 0);
}

#[test]
fn unknown_flag_is_a_configuration_error() {
    assert_eq!(code(&mixeval(&["run", "--bogus"])), 1);
}

#[test]
fn missing_input_path_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = mixeval(&[
        "run",
        "--input",
        "/nonexistent/survey.csv",
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn validate_reports_missing_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic(dir.path(), "300");
    let out_dir = dir.path().join("out");
    let base = [
        "validate",
        "--input",
        &input,
        "--output-dir",
        out_dir.to_str().unwrap(),
    ];
    let out = mixeval(&base);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("PA"));
    let mut args = base.to_vec();
    args.extend(THRESHOLDS);
    assert_eq!(code(&mixeval(&args)), 0);
}

#[test]
fn config_file_with_bad_values_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "input = \"x.csv\"\noutput_dir = \"out\"\n[bootstrap]\nreplicates = 1\n",
    )
    .unwrap();
    assert_eq!(
        code(&mixeval(&["run", "--config", config.to_str().unwrap()])),
        1
    );
    std::fs::write(&config, "input = [1, 2]\n").unwrap();
    assert_eq!(
        code(&mixeval(&["run", "--config", config.to_str().unwrap()])),
        1
    );
}

#[test]
fn estimation_failure_exits_two_and_leaves_a_marker() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic(dir.path(), "300");
    let out_dir = dir.path().join("out");
    // every household exceeds the area ceiling, so nothing is left to estimate
    let mut args = vec![
        "run",
        "--input",
        &input,
        "--output-dir",
        out_dir.to_str().unwrap(),
    ];
    for t in ["PA=1", "BA=1", "GO=1", "MG=1", "RS=1"] {
        args.extend(["--threshold", t]);
    }
    let out = mixeval(&args);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("ERROR").exists());
}

#[test]
fn run_writes_tables_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic(dir.path(), "1500");
    let out_dir = dir.path().join("out");
    let mut args = vec![
        "run",
        "--input",
        &input,
        "--output-dir",
        out_dir.to_str().unwrap(),
        "--replicates",
        "20",
        "--min-successful",
        "10",
        "--contrasts",
        "1,2,4",
    ];
    args.extend(THRESHOLDS);
    let out = mixeval(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "att.txt",
        "att.csv",
        "shares.csv",
        "summary.csv",
        "funnel.csv",
        "balance.csv",
        "manifest.json",
    ] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let att = std::fs::read_to_string(out_dir.join("att.csv")).unwrap();
    assert_eq!(att.lines().count(), 1 + 3 * 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert!(manifest.is_object());
}
