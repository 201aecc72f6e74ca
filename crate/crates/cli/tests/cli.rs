use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_zeno-schur"))
        .arg("--config")
        .arg(&cfg)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p).unwrap()
}

const SMALL_GRID: &str = r#"{"seed": 11, "grid": {
    "a0_values": {"start": 0.0, "stop": 2.0, "count": 4},
    "zeta_values": [0.0, 0.25, 0.5],
    "n_traj": 12,
    "base_config": {"k_max": 40}
}}"#;

#[test]
fn grid_writes_probability_table() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(tmp.path(), SMALL_GRID, &["--out", out.to_str().unwrap(), "--workers", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let grid = read(out.join("grid.csv"));
    let mut lines = grid.lines();
    assert_eq!(lines.next(), Some("a0,zeta,P0,P1,P2,P3,mean_fpt,censored_fraction"));
    assert_eq!(lines.count(), 12);
    assert!(out.join("boundary.csv").exists());
    let manifest: serde_json::Value = serde_json::from_str(&read(out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["subcommand"], "grid");
    assert!(!out.join("FAILED").exists());
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    let o = run(tmp.path(), SMALL_GRID, &["--out", first.to_str().unwrap(), "--workers", "1"]);
    assert!(o.status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_zeno-schur"))
        .arg("--config")
        .arg(first.join("manifest.json"))
        .args(["--out", second.to_str().unwrap(), "--workers", "3"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["grid.csv", "boundary.csv"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn schur_without_coupling_returns_slow_block() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = r#"{"format": "json", "schur": {
        "a": [[2.0, 0.5], [0.5, -1.0]], "b": [[0.0], [0.0]], "c": [[3.0]]}}"#;
    let o = run(tmp.path(), cfg, &["--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&read(out.join("schur.json"))).unwrap();
    assert_eq!(v["q_eff"], serde_json::json!([[2.0, 0.5], [0.5, -1.0]]));
    assert_eq!(v["signature"]["n_minus"], 1);
}

#[test]
fn invalid_config_names_the_field_and_leaves_marker() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(tmp.path(), r#"{"grid": {"n_traj": -3}}"#, &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.n_traj"));
    assert!(read(out.join("FAILED")).contains("grid.n_traj"));
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn numerical_failure_exits_nonzero_without_artifacts() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(tmp.path(), r#"{"reconstruct": {"q_eff": [[1.0, 0.0], [0.0, -2.0]]}}"#, &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(out.join("FAILED").exists());
    assert!(!out.join("reconstruct.csv").exists());
}

#[test]
fn success_clears_stale_marker() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("FAILED"), "old").unwrap();
    let o = run(tmp.path(), r#"{"minimal-scan": {"chi": [0.0, 1.0, 2.0], "g": [0.5, 1.0]}}"#, &["--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(!out.join("FAILED").exists());
    assert!(read(out.join("minimal_scan.csv")).starts_with("chi,g,"));
}
