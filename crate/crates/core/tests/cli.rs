mod common;

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use common::*;
use poseguide::calibration::param_error;
use poseguide::service::{
    read_document, CalibrationFile, ClientBody, PoseSetFile, ServerBody, SessionClient,
};
use poseguide::synthetic::ExperimentReport;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_poseguide"));
    for (k, _) in std::env::vars() {
        if k.starts_with("POSEGUIDE_") {
            c.env_remove(k);
        }
    }
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn poseguide")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn error_kind(out: &Output) -> String {
    let line = String::from_utf8_lossy(&out.stderr);
    let v: serde_json::Value =
        serde_json::from_str(line.trim()).expect("stderr is one JSON object");
    assert_eq!(v["schema_version"], poseguide::SCHEMA_VERSION);
    assert!(v["message"].is_string());
    v["error"].as_str().unwrap().to_string()
}

const SMALL: [&str; 6] = ["--k-sets", "12", "--pool-size", "150", "--seed", "3"];

fn optimize(out: &Path) -> Output {
    let mut args = vec!["optimize", "--out", p(out)];
    args.extend(SMALL);
    run(&args)
}

#[test]
fn optimize_writes_a_scored_set_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let out = optimize(&a);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(optimize(&b).status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let file: PoseSetFile = read_document(&a).unwrap();
    assert_eq!(file.pose_set.poses.len(), 20);
    assert!(file.report.score > 0.0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let labels: Vec<&str> = stdout
        .lines()
        .skip(1)
        .filter_map(|l| l.split_whitespace().next())
        .collect();
    assert_eq!(labels, ["min_mre", "max_mre", "min_score", "max_score"]);
}

#[test]
fn simulate_report_structure_and_noiseless_limit() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--out", p(dir.path()), "--noise-sigma", "0"];
    args.extend(SMALL);
    let out = run(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: ExperimentReport = read_document(&dir.path().join("report.json")).unwrap();
    let csv = fs::read_to_string(dir.path().join("table.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let max = report.row("max_score").unwrap();
    for r in &report.rows {
        assert!(r.mre < 1e-6, "{}: mre {}", r.label, r.mre);
        assert!(max.score >= r.score);
        // with MRE near zero the score is the inverse parameter error
        assert!((r.score * (r.mre + r.param_err) - 1.0).abs() < 1e-9);
    }
    assert!(report.rows.iter().all(|r| max.param_err <= r.param_err));
    assert_eq!(report.selected.seed, max.set_seed);
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let outs: Vec<PathBuf> = (0..2).map(|i| dir.path().join(i.to_string())).collect();
    for o in &outs {
        let mut args = vec!["simulate", "--out", p(o)];
        args.extend(SMALL);
        assert!(run(&args).status.success());
    }
    for f in ["report.json", "table.csv"] {
        assert_eq!(
            fs::read(outs[0].join(f)).unwrap(),
            fs::read(outs[1].join(f)).unwrap()
        );
    }
}

#[test]
fn input_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out_file = dir.path().join("o.json");

    let out = run(&["optimize", "--out", p(&out_file), "--k-sets", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "usage");

    let bad = dir.path().join("camera.json");
    fs::write(&bad, b"{\"schema_version\": 1, \"camera\": ").unwrap();
    let out = run(&["simulate", "--out", p(dir.path()), "--camera", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "parse");

    fs::write(&bad, b"{\"schema_version\": 999, \"camera\": {}}").unwrap();
    let out = run(&["simulate", "--out", p(dir.path()), "--camera", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "unsupported_schema");

    let out = run(&["optimize", "--out", p(&out_file), "--camera", "lens9"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&[
        "calibrate",
        "--observations",
        p(&dir.path().join("missing")),
        "--out",
        p(&out_file),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_file.exists());
}

#[test]
fn preset_files_are_accepted_in_place_of_names() {
    let dir = tempfile::tempdir().unwrap();
    let camera = dir.path().join("lens2.json");
    let space = dir.path().join("desk.json");
    assert!(run(&["preset", "camera", "lens2", "--out", p(&camera)])
        .status
        .success());
    assert!(run(&[
        "preset",
        "space",
        "desk",
        "--camera",
        p(&camera),
        "--out",
        p(&space)
    ])
    .status
    .success());
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let mut by_file = vec![
        "optimize",
        "--out",
        p(&a),
        "--camera",
        p(&camera),
        "--space",
        p(&space),
    ];
    by_file.extend(SMALL);
    let mut by_name = vec![
        "optimize",
        "--out",
        p(&b),
        "--camera",
        "lens2",
        "--space",
        "desk",
    ];
    by_name.extend(SMALL);
    assert!(run(&by_file).status.success());
    assert!(run(&by_name).status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn rehearse_then_calibrate_from_stored_observations() {
    let dir = tempfile::tempdir().unwrap();
    let poses = dir.path().join("poses.json");
    assert!(optimize(&poses).status.success());
    let out_dir = dir.path().join("rehearsal");
    let out = run(&[
        "rehearse",
        "--poses",
        p(&poses),
        "--seed",
        "5",
        "--out",
        p(&out_dir),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["captured"], 20);
    let events = fs::read_to_string(out_dir.join("events.jsonl")).unwrap();
    assert!(events.lines().last().unwrap().contains("\"completed\""));

    let recal = dir.path().join("recal.json");
    let out = run(&[
        "calibrate",
        "--observations",
        p(&out_dir.join("observations.jsonl")),
        "--out",
        p(&recal),
    ]);
    assert!(out.status.success());
    let a: CalibrationFile = read_document(&out_dir.join("calibration.json")).unwrap();
    let b: CalibrationFile = read_document(&recal).unwrap();
    assert_eq!(a.result, b.result);
    assert!(param_error(&a.result.intrinsics, &lens1().truth) < 5.0);
}

#[test]
fn serve_runs_a_session_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let poses = dir.path().join("poses.json");
    assert!(optimize(&poses).status.success());
    let file: PoseSetFile = read_document(&poses).unwrap();
    let run_ = rehearsal(&lens1(), file.session_config(), 0.1, 8);
    assert!(run_.state.is_complete());

    let data = dir.path().join("data");
    let mut child = bin()
        .args([
            "serve",
            "--poses",
            p(&poses),
            "--listen",
            "127.0.0.1:0",
            "--data-dir",
            p(&data),
        ])
        .args(["--session-id", "cli"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let banner: serde_json::Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
    assert_eq!(banner["session_id"], "cli");
    let addr = banner["listening"].as_str().unwrap().to_string();

    let mut client = SessionClient::connect(&addr, "cli").unwrap();
    let mut last = None;
    for f in &run_.frames {
        let batch = client
            .exchange(ClientBody::CornerUpdate {
                frame_token: f.frame_token,
                corners: f.corners.clone(),
            })
            .unwrap();
        last = batch.into_iter().last();
    }
    let Some(ServerBody::ServerComplete { result_ref, .. }) = last.map(|m| m.body) else {
        panic!("no completion");
    };
    drop(client);
    assert!(child.wait().unwrap().success());
    let closing: serde_json::Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
    assert_eq!(closing["result_ref"], result_ref.as_str());
    assert_eq!(closing["phase"], "complete");

    let store = poseguide::service::ArtifactStore::open(&data).unwrap();
    let stored: CalibrationFile = store.get_json(&result_ref).unwrap();
    assert_eq!(stored.result.per_view_poses.len(), 20);
}
