//! The `qubo-suppress` binary driven as a subprocess.

use std::path::Path;
use std::process::{Command, Output};

use qubo_suppress::io::{load_detections, load_groundtruth};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qubo-suppress")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cli(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_suppress_evaluate_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    ok(&["synth", "--seed", "3", "--objects", "9", "--occlusion", "0.5", "--out", s(&scene), "--images", "2", "--size", "128"]);
    for f in ["1.png", "2.png", "groundtruth.json", "detections.json"] {
        assert!(scene.join(f).exists(), "{f}");
    }

    let kept = tmp.path().join("kept.json");
    let report = tmp.path().join("report.json");
    let dets = scene.join("detections.json");
    let msg = ok(&[
        "suppress", "--detections", s(&dets), "--images", s(&scene), "--method", "qaqs_c",
        "--output", s(&kept), "--report", s(&report),
    ]);
    assert!(msg.starts_with("qaqs_c: kept"), "{msg}");
    let out = load_detections(&kept).unwrap();
    assert!(!out.is_empty() && out.len() <= load_detections(&dets).unwrap().len());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(report["images"].as_array().unwrap().len(), 2);

    let table = ok(&["evaluate", "--predictions", s(&kept), "--groundtruth", s(&scene.join("groundtruth.json"))]);
    assert_eq!(table.lines().count(), 12);
    assert!(table.starts_with("mAP "), "{table}");
}

#[test]
fn groundtruth_as_predictions_scores_one() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--seed", "5", "--objects", "4", "--occlusion", "0.0", "--out", s(tmp.path()), "--size", "128"]);
    let gt = tmp.path().join("groundtruth.json");
    let mut records: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(&gt).unwrap()).unwrap();
    for r in &mut records {
        r["score"] = 1.0.into();
    }
    let preds = tmp.path().join("preds.json");
    std::fs::write(&preds, serde_json::to_string(&records).unwrap()).unwrap();
    let metrics = tmp.path().join("metrics.json");
    let table = ok(&["evaluate", "--predictions", s(&preds), "--groundtruth", s(&gt), "--output", s(&metrics)]);
    assert!(table.lines().any(|l| l == "mAP      1.0000"), "{table}");
    assert!(table.lines().any(|l| l == "mAP@50   1.0000"), "{table}");
    assert_eq!(load_groundtruth(&gt).unwrap().len(), 4);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(json["mAP"], 1.0);
}

#[test]
fn appearance_methods_need_images() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--seed", "1", "--objects", "4", "--occlusion", "0.5", "--out", s(tmp.path()), "--size", "128"]);
    let dets = tmp.path().join("detections.json");
    let out = tmp.path().join("out.json");
    let r = cli(&["suppress", "--detections", s(&dets), "--method", "qaqs", "--output", s(&out)]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("--images"));
    // geometry-only methods run without the raster
    ok(&["suppress", "--detections", s(&dets), "--method", "qsqs", "--output", s(&out)]);
    ok(&["suppress", "--detections", s(&dets), "--method", "soft-nms", "--preset", "regime2", "--output", s(&out)]);
}

#[test]
fn config_file_drives_suppression() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--seed", "2", "--objects", "9", "--occlusion", "0.6", "--out", s(tmp.path()), "--size", "128"]);
    let cfg = tmp.path().join("cfg.toml");
    std::fs::write(&cfg, "method = \"qsqs\"\npreset = \"regime2\"\nsolver = \"annealing\"\nseed = 9\n").unwrap();
    let out = tmp.path().join("out.json");
    let msg = ok(&["suppress", "--detections", s(&tmp.path().join("detections.json")), "--config", s(&cfg), "--output", s(&out)]);
    assert!(msg.starts_with("qsqs:"), "{msg}");

    std::fs::write(&cfg, "bogus_key = 1\n").unwrap();
    let r = cli(&["suppress", "--detections", s(&tmp.path().join("detections.json")), "--config", s(&cfg), "--output", s(&out)]);
    assert!(!r.status.success());
}

#[test]
fn bench_prints_one_row_per_method() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--seed", "4", "--objects", "9", "--occlusion", "0.5", "--out", s(tmp.path()), "--size", "128"]);
    let table = ok(&["bench", "--scene", s(tmp.path()), "--methods", "nms,qf,qaqs_c"]);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[3].starts_with("qaqs_c") && rows[3].ends_with("optimal"), "{table}");
}

#[test]
fn bad_input_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    let r = cli(&["evaluate", "--predictions", s(&missing), "--groundtruth", s(&missing)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).starts_with("error:"));
    assert_eq!(cli(&["suppress", "--unknown-flag"]).status.code(), Some(2));
    assert_ne!(cli(&["synth", "--seed", "1", "--objects", "0", "--occlusion", "0.5", "--out", s(tmp.path())]).status.code(), Some(0));
}
