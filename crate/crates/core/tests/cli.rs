use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const OP: &str = r#"{"command": "newton", "context": {"q": [2, 0]},
 "payload": {"coeffs": [
   {"n_min": 1, "coeffs": [[1, 0]]},
   {"n_min": 0, "coeffs": [[-1, 0], [-1, 0]]},
   {"n_min": 0, "coeffs": [[1, 0]]}]}}"#;

// A = 2, d = 1: the direction 2 is forbidden
const MODULE: &str = r#"{"context": {"q": [2, 0]},
 "payload": {"module": {"d": 1, "A": [[[2, 0]]], "U": [{"n_min": -1, "coeffs": [[1, 0]]}]}}}"#;

fn qstokes(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qstokes")).args(args).output().expect("binary runs")
}

fn job(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn newton_on_the_tschakaloff_dual() {
    let dir = tempfile::tempdir().unwrap();
    let op = job(dir.path(), "op.json", OP);
    let out = qstokes(&["newton", "--input", op.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["slopes"], serde_json::json!([[-1, 1], [0, 1]]));
}

#[test]
fn forbidden_direction_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let m = job(dir.path(), "mod.json", MODULE);
    let out = qstokes(&["sum", "--input", m.to_str().unwrap(), "--direction", "2.0+0i"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"], "ForbiddenDirection");
    // any representative of the same class
    let out = qstokes(&["sum", "--input", m.to_str().unwrap(), "--direction", "4+0i"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn allowed_direction_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let m = job(dir.path(), "mod.json", MODULE);
    let csv = dir.path().join("f.csv");
    let outp = dir.path().join("f.json");
    let out = qstokes(&[
        "sum",
        "--input",
        m.to_str().unwrap(),
        "--direction",
        "1.3+0.4i",
        "--samples",
        "5",
        "--csv",
        csv.to_str().unwrap(),
        "--output",
        outp.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("re_z,im_z,re_F0,im_F0\n"));
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), 6);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&outp).unwrap()).unwrap();
    assert_eq!(v["values"].as_array().unwrap().len(), 5);
}

#[test]
fn schema_and_io_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = job(dir.path(), "bad.json", r#"{"payload": {}, "extra": 1}"#);
    let out = qstokes(&["newton", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["error"], "Schema");

    let op = job(dir.path(), "op.json", OP);
    let out = qstokes(&["serre", "--input", op.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let unknown = job(dir.path(), "u.json", r#"{"context": {"q": [2, 0]}, "payload": {"coeffs": [], "x": 0}}"#);
    assert_eq!(qstokes(&["newton", "--input", unknown.to_str().unwrap()]).status.code(), Some(1));

    let out = qstokes(&["newton", "--input", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["error"], "Io");

    let small_q = qstokes(&["theta-eval", "--q", "0.5"]);
    assert_eq!(small_q.status.code(), Some(1));
}

#[test]
fn theta_eval_flags_only() {
    let out = qstokes(&["theta-eval", "--q", "2", "--samples", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["values"].as_array().unwrap().len(), 3);
}

#[test]
fn verify_suite_is_deterministic() {
    let a = qstokes(&["verify-suite", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stdout));
    let v = json(&a);
    assert_eq!(v["passed"], true);
    assert_eq!(v["suites"].as_array().unwrap().len(), 11);
    let b = qstokes(&["verify-suite", "--seed", "7", "--jobs", "4"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn stokes_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let m = job(dir.path(), "mod.json", MODULE);
    let args = ["stokes", "--input", m.to_str().unwrap(), "--direction", "1.3+0.4i", "--direction2", "-1.1+0.2i", "--seed", "3"];
    let a = qstokes(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stdout));
    let mut more = args.to_vec();
    more.extend(["--jobs", "3"]);
    assert_eq!(a.stdout, qstokes(&more).stdout);
}
