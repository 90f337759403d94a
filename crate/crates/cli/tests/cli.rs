//! End-to-end checks of the command-line interface.

use std::process::Command;

fn bmmv() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bmmv"))
}

#[test]
fn validate_operators_passes() {
    let out = bmmv()
        .args(["validate-operators", "--samples", "500", "--seed", "3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pass"], serde_json::Value::Bool(true));
    assert!(report["kinds"].as_array().unwrap().len() >= 7);
}

#[test]
fn run_preset_writes_artifacts_and_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = bmmv()
        .args([
            "run",
            "--preset",
            "penalized-ode",
            "--set",
            "grid.n_steps=100",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["config.toml", "paths.csv", "solution.csv", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    let u0 = summary["u0"][0].as_f64().unwrap();
    assert!((u0 - (-1.0f64).exp()).abs() < 0.05, "u0 {u0}");
}

#[test]
fn invalid_operator_exits_2_with_error_json() {
    let out = bmmv()
        .args([
            "run",
            "--preset",
            "penalized-ode",
            "--set",
            "operator.kind=normal_cone_interval",
            "--set",
            "operator.lo=1",
            "--set",
            "operator.hi=1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "DegenerateDomain");
}

#[test]
fn unknown_preset_is_reported() {
    let out = bmmv().args(["run", "--preset", "no-such"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "Config");
}

#[test]
fn config_file_roundtrip_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bmmv::harness::presets::preset_config("penalized-ode")
        .unwrap()
        .with_overrides(&["grid.n_steps=50".into()])
        .unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, cfg.to_toml_string()).unwrap();
    let out = bmmv()
        .arg("run")
        .arg(&path)
        .args(["--seed", "9"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["config_hash"].is_string());
}
