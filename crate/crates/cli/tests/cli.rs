use std::io::Write;
use std::process::Command;

fn regkit() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_regkit"));
    cmd.env_remove("REGKIT_SEED");
    cmd
}

fn write_problem(json: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().expect("temp file");
    f.write_all(json.as_bytes()).expect("write problem");
    f.flush().expect("flush");
    f
}

#[test]
fn validate_reports_bundled_example() {
    let out = regkit().args(["validate", "ex32_gamma"]).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("ok: bundled:ex32_gamma"), "got: {text}");
    assert!(text.contains("n=1, m=1, ineq=3"), "got: {text}");
}

#[test]
fn validate_rejects_out_of_range_variable() {
    let f = write_problem(
        r#"{"dims": {"n": 1, "m": 1},
            "lower": {"ineq": ["x1 - y1", "y2"], "eq": [], "objective": "y1"},
            "flags": {"convex_in_y": true, "locally_bounded": true}}"#,
    );
    let out = regkit().arg("validate").arg(f.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("lower.ineq[1]"), "got: {err}");
}

#[test]
fn validate_rejects_malformed_json() {
    let f = write_problem("{ not json");
    let out = regkit().arg("validate").arg(f.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_warns_when_no_constraints() {
    let f = write_problem(
        r#"{"dims": {"n": 1, "m": 1},
            "lower": {"ineq": [], "eq": [], "objective": "y1^2"},
            "flags": {"convex_in_y": true, "locally_bounded": true}}"#,
    );
    let out = regkit().arg("validate").arg(f.path()).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("warning:"), "got: {text}");
    assert!(text.contains("whole space"), "got: {text}");
}

#[test]
fn check_cq_emits_report_envelope() {
    let out = regkit()
        .args(["check-cq", "ex_qp", "--point", "minus", "--cq", "licq"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["version", "command", "seed", "input_digest", "tolerances", "payload", "wall_ms"] {
        assert!(doc.get(key).is_some(), "missing envelope key {key}");
    }
    assert_eq!(doc["seed"], 42);
    assert!(doc["payload"]["verdict"].is_string());
}

#[test]
fn repeated_run_with_same_seed_is_byte_identical_in_payload() {
    let run = || {
        let out = regkit()
            .args(["probe-rreg", "ex_jump", "--point", "origin", "--radii", "1e-2", "--samples", "20"])
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        serde_json::to_vec(&doc["payload"]).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn seed_env_var_overrides_default() {
    let out = regkit()
        .args(["check-cq", "ex32_gamma", "--point", "kink", "--cq", "licq"])
        .env("REGKIT_SEED", "7")
        .output()
        .unwrap();
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["seed"], 7);
}

#[test]
fn seed_flag_beats_env_var() {
    let out = regkit()
        .args(["check-cq", "ex32_gamma", "--point", "kink", "--cq", "licq", "--seed", "11"])
        .env("REGKIT_SEED", "7")
        .output()
        .unwrap();
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["seed"], 11);
}

#[test]
fn reproduce_unknown_name_lists_catalogue() {
    let out = regkit().args(["reproduce", "no_such"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("ex32_gamma"), "got: {err}");
    assert!(err.contains("ex42_bilevel"), "got: {err}");
}

#[test]
fn scan_csv_handles_negative_grid_bounds() {
    let out = regkit()
        .args(["scan", "ex_jump", "--grid", "-1:2:4", "--format", "csv"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,phi,n_solutions,y1"));
    assert_eq!(text.trim_end().lines().count(), 5);
    assert!(text.contains("inf"), "x = -1 should be infeasible: {text}");
}

#[test]
fn out_flag_writes_the_report_to_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = regkit()
        .args(["check-cq", "ex_qp", "--point", "minus", "--cq", "mfcq"])
        .arg("--out")
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out.stdout.is_empty(), "stdout should be quiet with --out");
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert!(doc["payload"]["verdict"].is_string());
}

#[test]
fn unknown_point_name_exits_with_usage_error() {
    let out = regkit()
        .args(["check-cq", "ex_qp", "--point", "nowhere", "--cq", "licq"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inline_coordinates_accept_negative_values() {
    let out = regkit()
        .args(["check-cq", "ex_qp", "--point", "-1,0,0", "--cq", "licq"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc["payload"]["verdict"].is_string());
}
