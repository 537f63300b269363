use std::fs;
use std::path::Path;

use chemostokes::solver::{read_field, read_manifest, run, SimConfig};

fn config(t_final: f64, dir: &Path) -> SimConfig {
    SimConfig::from_json(&format!(
        r#"{{
        "dim": 2,
        "grid": {{"cells": [24, 20], "extent": [3.0, 2.5]}},
        "model": {{"m": 1.3, "k_D": 1.0, "eps": 0.1}},
        "phi": {{"gradient": [0.0, -1.0]}},
        "ic": {{
            "n0": {{"preset": "gaussian", "amplitude": 2.0, "center": [1.0, 1.2], "width": 0.4, "background": 0.1}},
            "c0": {{"preset": "perturbed", "mean": 1.0, "amplitude": 0.2}},
            "u0": {{"preset": "vortex", "amplitude": 0.05}}
        }},
        "time": {{"t_final": {t_final}, "dt_max": 0.01, "sample_every": 0.1}},
        "output": {{"dir": "{}", "snapshot_every": 2}},
        "seed": 11
    }}"#,
        dir.display()
    ))
    .unwrap()
}

#[test]
fn zero_final_time_writes_only_the_initial_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&config(0.0, tmp.path()), tmp.path(), None).unwrap();
    assert_eq!(out.records.len(), 1);
    let m = read_manifest(&tmp.path().join("manifest.json")).unwrap();
    assert_eq!(m.status, "complete");
    assert_eq!(m.snapshots.len(), 1);
    assert_eq!(m.snapshots[0].t, 0.0);
    let text = fs::read_to_string(tmp.path().join("diagnostics.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn manifest_lists_verified_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(0.3, tmp.path());
    let out = run(&cfg, tmp.path(), None).unwrap();
    let m = read_manifest(&tmp.path().join("manifest.json")).unwrap();
    // samples 0..=3, snapshots at 0, 2 and the final one
    assert_eq!(m.samples.len(), 4);
    assert_eq!(m.snapshots.iter().map(|s| s.sample).collect::<Vec<_>>(), vec![0, 2, 3]);
    let last = m.snapshots.last().unwrap();
    let n = last.file("n").unwrap();
    let (h, data) = read_field(&tmp.path().join(&n.path), Some(&n.sha256)).unwrap();
    assert_eq!(h.counts, [24, 20, 1]);
    assert_eq!(h.time, 3.0 * 0.1);
    assert_eq!(data, out.final_state.n);
    let ux = last.file("u_x").unwrap();
    let (h, _) = read_field(&tmp.path().join(&ux.path), Some(&ux.sha256)).unwrap();
    assert_eq!(h.counts, [25, 20, 1]);
    let checks: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("checks.json")).unwrap()).unwrap();
    for c in checks.as_array().unwrap() {
        for key in ["name", "pass", "max_deviation", "at_time"] {
            assert!(c.get(key).is_some());
        }
    }
}

#[test]
fn resume_reproduces_the_trajectory_bit_exactly() {
    let full = tempfile::tempdir().unwrap();
    let half = tempfile::tempdir().unwrap();
    let resumed = tempfile::tempdir().unwrap();
    run(&config(0.6, full.path()), full.path(), None).unwrap();
    run(&config(0.3, half.path()), half.path(), None).unwrap();
    let out = run(
        &config(0.6, resumed.path()),
        resumed.path(),
        Some(&half.path().join("manifest.json")),
    )
    .unwrap();
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read(full.path(), "diagnostics.csv"), read(resumed.path(), "diagnostics.csv"));
    assert_eq!(read(full.path(), "checks.json"), read(resumed.path(), "checks.json"));
    assert_eq!(
        read(full.path(), "snapshots/n_000006.bin"),
        read(resumed.path(), "snapshots/n_000006.bin")
    );
    assert_eq!(out.records.len(), 7);
    // resuming in place also works
    run(&config(0.6, half.path()), half.path(), Some(&half.path().join("manifest.json"))).unwrap();
    assert_eq!(read(full.path(), "diagnostics.csv"), read(half.path(), "diagnostics.csv"));
}

#[test]
fn resume_rejects_a_different_model() {
    let a = tempfile::tempdir().unwrap();
    run(&config(0.1, a.path()), a.path(), None).unwrap();
    let mut cfg = config(0.2, a.path());
    cfg.model.eps = 0.2;
    let err = run(&cfg, a.path(), Some(&a.path().join("manifest.json"))).unwrap_err();
    assert!(!err.is_numerical());
}

#[test]
fn failure_leaves_a_partial_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(0.5, tmp.path());
    cfg.time.dt_max = 0.2;
    cfg.time.force_dt = true;
    let err = run(&cfg, tmp.path(), None).unwrap_err();
    assert!(err.is_numerical(), "{err}");
    let m = read_manifest(&tmp.path().join("manifest.json")).unwrap();
    assert_eq!(m.status, "failed");
    assert!(m.error.unwrap().contains("face"));
    assert!(m.diagnostics.is_some());
    assert_eq!(m.snapshots.len(), 1);
}
