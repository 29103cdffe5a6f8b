use std::path::Path;
use std::process::Command;

use canopy_cli::las::write_las_bytes;
use canopy_core::PointRecord;

fn canopy(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_canopy"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = canopy(args);
    assert!(
        out.status.success(),
        "canopy {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn lists_every_subcommand() {
    let help = ok(&["--help"]);
    for cmd in [
        "convert", "segment", "featurize", "train", "predict", "evaluate", "sweep-size",
        "sweep-density", "fit-scaling", "synth", "report", "serve", "bench", "run",
    ] {
        assert!(help.contains(cmd), "{cmd} missing from help");
    }
    for flag in ["--seed", "--jobs", "--out"] {
        assert!(help.contains(flag));
    }
}

#[test]
fn step_by_step_on_a_segment_set() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let common = ["--out", s(out), "--seed", "4"];
    let run = |extra: &[&str]| ok(&[&common[..], extra].concat());
    run(&["synth", "--segments-per-species", "12"]);
    assert!(out.join("dataset/segment_points.csv").exists());
    run(&["split", "--test-fraction", "0.25"]);
    run(&["featurize"]);
    run(&["train", "--trees", "40"]);
    run(&["predict"]);
    run(&["evaluate", "--bootstrap", "50"]);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["n_evaluated"], 27);
    assert!(metrics["report"]["overall_accuracy"].as_f64().unwrap() > 0.5);
    run(&["sweep-density", "--densities", "2,5", "--folds", "3", "--trees", "20"]);
    run(&["fit-scaling", "--sweep", s(&out.join("sweep_density.csv"))]);
    assert!(out.join("fit_density.json").exists());
    assert!(out.join("fit_density.svg").exists());
    let listed = run(&["report"]);
    assert!(listed.contains("report.md"));
}

#[test]
fn convert_las_then_thin() {
    let tmp = tempfile::tempdir().unwrap();
    let pts: Vec<PointRecord> = (0..50)
        .map(|i| PointRecord {
            x: 1000.0 + (i % 10) as f64 * 0.05,
            y: 2000.0 + (i / 10) as f64 * 0.05,
            z: 10.0,
            channel: 1,
            reflectance: 100.0 + i as f64,
            amplitude: None,
            echo_deviation: None,
            return_number: 1,
            num_returns: 1,
        })
        .collect();
    let las = tmp.path().join("c2.las");
    std::fs::write(&las, write_las_bytes(&pts, 0.001)).unwrap();
    let out = tmp.path().join("o");
    ok(&["--out", s(&out), "convert", "--input", s(&las), "--channel", "2", "--fused"]);
    let rows = canopy_core::ingest::read_points(out.join("points.csv")).unwrap();
    assert_eq!(rows.len(), 50);
    assert!(rows.iter().all(|(id, p)| *id == 0 && p.channel == 2));
    assert!(out.join("fused_points.csv").exists());
    ok(&["--out", s(&out), "convert", "--input", s(&out.join("points.csv")), "--thin", "1.0", "--output", s(&out.join("thin.csv"))]);
    assert_eq!(canopy_core::ingest::read_points(out.join("thin.csv")).unwrap().len(), 1);
}

#[test]
fn errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = canopy(&["--out", s(tmp.path()), "train"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("features.csv"));
    let bad = tmp.path().join("m.json");
    std::fs::write(&bad, r#"{"seed": 1, "output_dir": "o", "stages": [{"stage": "segment", "cell": 1}]}"#).unwrap();
    let out = canopy(&["run", s(&bad)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));
}

#[test]
fn bench_writes_results() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&[
        "--out", s(tmp.path()), "bench", "--plot-trees", "5", "--per-species", "4", "--forest-trees", "5",
        "--repeats", "1", "--warmup", "0", "--threads", "1",
    ]);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("bench.json")).unwrap()).unwrap();
    let stages: Vec<&str> = v["results"].as_array().unwrap().iter().map(|r| r["stage"].as_str().unwrap()).collect();
    assert_eq!(stages, ["segment", "featurize", "train", "predict"]);
}
