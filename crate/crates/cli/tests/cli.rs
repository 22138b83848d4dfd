use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cfl_cli::{sha256_hex, verify_manifest};

const QUICK: &str = r#"{
  "nonlinearity": {"theta": 0.3, "amplitude": 1.0, "exponent": 2.0, "sigma": 0.1},
  "front": {"dim": 2, "fronts": [
    {"nu": [1.0], "theta": 1.0471975511965976},
    {"nu": [-1.0], "theta": 1.0471975511965976}
  ]},
  "solver": {"dx": 0.4, "cells": [64, 48], "center": [0.0, 3.0], "t_start": -2.0, "t_end": 2.0, "snapshot_interval": 1.0},
  "experiment": {"barriers": {"samples": 2000}}
}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn cfl(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfl"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("CFL_THREADS")
        .output()
        .unwrap()
}

/// The single run directory created under `out`.
fn run_dir(out: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

#[test]
fn profile_run_writes_a_verified_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "quick.json", QUICK);
    let out = tmp.path().join("runs");
    let o = cfl(&["profile"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(&out);
    for f in ["config.json", "profile.csv", "profile.json", "manifest.json"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    assert!(verify_manifest(&dir).unwrap().is_empty());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "profile");
    assert_eq!(manifest["pass"], true);
    let speed = serde_json::from_slice::<serde_json::Value>(&fs::read(dir.join("profile.json")).unwrap()).unwrap()["speed"]
        .as_f64()
        .unwrap();
    assert!((speed - 0.263436).abs() < 5e-6, "{speed}");

    // tampering is detected
    fs::write(dir.join("profile.json"), b"{}").unwrap();
    assert_eq!(verify_manifest(&dir).unwrap(), vec!["profile.json".to_string()]);
}

#[test]
fn invalid_configs_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    let empty = write_config(tmp.path(), "empty.json", "{}");
    let o = cfl(&["profile"], &empty, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nonlinearity"));

    let bad = QUICK.replace("\"dx\": 0.4", "\"dx\": -0.4");
    let bad = write_config(tmp.path(), "bad.json", &bad);
    let o = cfl(&["simulate"], &bad, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("solver.dx"));
}

#[test]
fn oversized_alpha_fails_barrier_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let text = QUICK.replace(
        "\"solver\"",
        "\"barrier\": {\"epsilon\": 0.003125, \"alpha\": 10.0, \"beta\": 1.0028e-3, \"delta\": 0.003125, \
         \"lambda\": 2.17e-6, \"varrho\": 4.225e7},\n  \"solver\"",
    );
    let cfg = write_config(tmp.path(), "alpha10.json", &text);
    let out = tmp.path().join("runs");
    let o = cfl(&["barriers-validate"], &cfg, &out);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(&out);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("barriers.json")).unwrap()).unwrap();
    for kind in ["upper", "time_shifted"] {
        let r = report[kind]["min_residual"].as_f64().unwrap();
        assert!(r < -0.5, "{kind}: {r}");
        assert_eq!(report[kind]["pass"], false);
    }
    assert!(verify_manifest(&dir).unwrap().is_empty());
}

fn snapshot_hashes(dir: &Path) -> Vec<(String, String)> {
    let mut v: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "cflb"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), sha256_hex(&fs::read(&p).unwrap())))
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_is_independent_of_the_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "quick.json", QUICK);
    let mut hashes = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(format!("runs{threads}"));
        let o = cfl(&["simulate", "--threads", threads], &cfg, &out);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let dir = run_dir(&out);
        assert!(verify_manifest(&dir).unwrap().is_empty());
        let h = snapshot_hashes(&dir);
        assert_eq!(h.len(), 5);
        for (name, _) in &h {
            let f = cfl_core::snapshot::load(&dir.join(name)).unwrap();
            assert_eq!(f.grid.counts(), &[64, 48]);
            assert!(f.range_violation() <= 1e-12);
        }
        hashes.push(h);
    }
    assert_eq!(hashes[0], hashes[1]);
}
