use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn svelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svelab")).args(args).output().expect("binary runs")
}

fn acceptance_config(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", "acceptance", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn validate_accepts_every_shipped_config() {
    let dir: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", "acceptance"].iter().collect();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let out = svelab(&["validate", "--config", path.to_str().unwrap()]);
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn invalid_field_is_reported_by_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{"experiment": "rate", "kernel": {"H": 0.5, "components": [{"c": 1.0}]},
            "model": {"x0": [0.0], "drift": {"family": "zero"}, "diffusion": {"family": "constant", "sigma": [1.0]}},
            "n_sequence": [16, 32, 64, 128], "T": -1.0}"#,
    );
    let out = svelab(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("T:"), "{err}");
}

#[test]
fn unknown_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"experiment": "appendix-check", "pathz": 3}"#);
    let out = svelab(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pathz"));
}

#[test]
fn subcommand_must_match_config() {
    let out = svelab(&["rate", "--config", &acceptance_config("c10_appendix.json"), "--out", "/nonexistent"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("experiment"));
}

#[test]
fn usage_errors_exit_with_one_and_help_with_zero() {
    assert_eq!(svelab(&["qv"]).status.code(), Some(1));
    assert_eq!(svelab(&["--help"]).status.code(), Some(0));
}

#[test]
fn passing_run_writes_outputs_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("kc");
    let out = svelab(&[
        "kernel-check",
        "--config",
        &acceptance_config("c9_kernel_tempered.json"),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.json", "checks.csv", "kernel_orders.csv", "manifest.json"] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["passed"], true);
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], report["config_hash"]);
}

#[test]
fn failing_check_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = svelab(&[
        "kernel-check",
        "--config",
        &acceptance_config("c9_kernel_inconsistent.json"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL admissible"));
}
