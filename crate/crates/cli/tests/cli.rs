use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_contact-field"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn help_lists_every_flag() {
    let expected: &[(&str, &[&str])] = &[
        ("synth", &["--config", "--out", "--frames", "--contacts", "--truth", "--threads", "--seed"]),
        ("filter", &["--episode", "--config", "--out"]),
        (
            "label-sim",
            &["--scene", "--contacts", "--episode", "--out", "--k-sharpness", "--half-prob-depth", "--lambda-dist", "--d-thresh", "--clip-percentile", "--no-clip"],
        ),
        (
            "label-real",
            &["--episode", "--filter-config", "--table-z", "--out", "--diagnostics", "--epsilon-height", "--lambda", "--eps", "--calibration"],
        ),
        ("solve-forces", &["--episode", "--candidates", "--lambda", "--eps", "--calibration", "--out"]),
        ("eval", &["--pred", "--gt", "--report", "--threshold"]),
        ("calibrate", &["--episode", "--reference", "--frame", "--out"]),
        ("export-ply", &["--episode", "--fields", "--frame", "--out"]),
    ];
    let tmp = tempfile::tempdir().unwrap();
    for (cmd, flags) in expected {
        let out = ok(tmp.path(), &[cmd, "--help"]);
        let text = String::from_utf8(out.stdout).unwrap();
        for flag in *flags {
            assert!(text.contains(flag), "{cmd} --help lacks {flag}");
        }
    }
    let top = String::from_utf8(ok(tmp.path(), &["--help"]).stdout).unwrap();
    for cmd in expected.iter().map(|(c, _)| c) {
        assert!(top.contains(cmd));
    }
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(tmp.path(), &["eval", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(tmp.path(), &[]).status.code(), Some(1));
}

#[test]
fn missing_input_exits_two_and_names_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["filter", "--episode", "nowhere.jsonl", "--out", "x.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.jsonl"));
}

#[test]
fn invalid_data_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.jsonl"), "{\"t\": 0.0}\n").unwrap();
    let out = run(tmp.path(), &["filter", "--episode", "bad.jsonl", "--out", "x.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    let cfg = r#"{"episode": {"approach_depth": 0.5}}"#;
    std::fs::write(tmp.path().join("c.json"), cfg).unwrap();
    let out = run(tmp.path(), &["synth", "--config", "c.json", "--out", "e.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn self_evaluation_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--out", "ep.jsonl", "--frames", "12"]);
    let out = ok(d, &["eval", "--pred", "ep.jsonl", "--gt", "ep.jsonl", "--report", "r.json"]);
    let stdout: Value = serde_json::from_slice(&out.stdout).unwrap();
    let report: Value = serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(stdout, report);
    assert_eq!(report["f1"], 1.0);
    assert_eq!(report["force_mse"], 0.0);
}

#[test]
fn synth_is_deterministic_under_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("c.json"), r#"{"noise": {"point_sigma": 0.001, "marker_sigma": 0.05}}"#).unwrap();
    ok(d, &["--seed", "4", "synth", "--config", "c.json", "--out", "a.jsonl", "--frames", "8"]);
    ok(d, &["synth", "--seed", "4", "--config", "c.json", "--out", "b.jsonl", "--frames", "8"]);
    ok(d, &["synth", "--seed", "5", "--config", "c.json", "--out", "c.jsonl", "--frames", "8"]);
    let a = std::fs::read(d.join("a.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.jsonl")).unwrap());
    assert_ne!(a, std::fs::read(d.join("c.jsonl")).unwrap());
}

#[test]
fn label_sim_reproduces_generator_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--out", "ep.jsonl", "--frames", "20", "--contacts", "c.jsonl"]);
    std::fs::write(
        d.join("scene.json"),
        r#"[{"kind": "half_space", "point": [0, 0, 0], "normal": [0, 0, 1]}]"#,
    )
    .unwrap();
    ok(d, &["label-sim", "--scene", "scene.json", "--contacts", "c.jsonl", "--episode", "ep.jsonl", "--out", "sim.jsonl"]);
    let out = ok(d, &["eval", "--pred", "sim.jsonl", "--gt", "ep.jsonl"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["f1"], 1.0);
    assert!(report["force_mse"].as_f64().unwrap() < 1e-20);
}

#[test]
fn label_real_writes_fields_and_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--out", "ep.jsonl", "--frames", "20"]);
    ok(d, &["--threads", "2", "label-real", "--episode", "ep.jsonl", "--table-z", "0.0", "--out", "real.jsonl"]);
    let fields = lines(&d.join("real.jsonl"));
    let diag = lines(&d.join("real.jsonl.diag.jsonl"));
    assert_eq!(fields.len(), 20);
    assert_eq!(diag.len(), 20);
    assert!(diag.iter().any(|r| r["gated"] == true));
    for r in &diag {
        for key in ["t", "gated", "candidates", "wrench_residual", "converged"] {
            assert!(r.get(key).is_some(), "missing {key}");
        }
    }
    let bad = run(d, &["label-real", "--episode", "ep.jsonl", "--table-z", "high", "--out", "x.jsonl"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn solve_forces_matches_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--out", "ep.jsonl", "--frames", "3"]);
    let rec = r#"{"t": 0.0, "candidates": [{"position": [0, 0, 0], "normal": [0, 0, 1], "prob": 1.0}], "wrench": {"force": [0, 0, 2], "torque": [0, 0, 0]}}"#;
    std::fs::write(d.join("cands.jsonl"), format!("{rec}\n")).unwrap();
    ok(d, &["solve-forces", "--episode", "ep.jsonl", "--candidates", "cands.jsonl", "--out", "sol.jsonl"]);
    let sol = lines(&d.join("sol.jsonl"));
    let fz = sol[0]["forces"][0][2].as_f64().unwrap();
    assert!((fz - 1.98022).abs() < 1e-5);
    assert_eq!(sol[0]["converged"], true);
}

#[test]
fn calibrate_recovers_scale() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--out", "ep.jsonl", "--frames", "10"]);
    // the generator's last frame presses straight down with 5 N
    std::fs::write(d.join("ref.json"), r#"{"force": [0, 0, 10], "torque": [0, 0, 0]}"#).unwrap();
    let out = ok(d, &["calibrate", "--episode", "ep.jsonl", "--reference", "ref.json", "--frame", "4", "--out", "cal.json"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["frame"], 4);
    assert!(v["scale"].as_f64().unwrap() > 0.0);
    let out = run(d, &["calibrate", "--episode", "ep.jsonl", "--reference", "ref.json", "--frame", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn export_ply_header_and_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--out", "ep.jsonl", "--frames", "10"]);
    ok(d, &["export-ply", "--episode", "ep.jsonl", "--frame", "9", "--out", "f.ply"]);
    let text = std::fs::read_to_string(d.join("f.ply")).unwrap();
    let n: usize = text
        .lines()
        .find_map(|l| l.strip_prefix("element vertex "))
        .unwrap()
        .parse()
        .unwrap();
    let body: Vec<&str> = text.lines().skip_while(|l| *l != "end_header").skip(1).collect();
    assert_eq!(body.len(), n);
    assert!(body.iter().all(|l| l.split_whitespace().count() == 7));
}
