use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geiringer::cli::{EXIT_CAP, EXIT_USAGE, EXIT_VALIDATION};
use geiringer::io::{canonical_string, population_to_json, read_population};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geiringer"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn limit_reports_exact_value() {
    let pa = fixture("P_A.json");
    let o = run(&["limit", "--pop", pa.to_str().unwrap(), "--schema", "alpha,1,2,f1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["command"], "limit");
    assert!(stdout(&o).contains("\"2/9\""));
}

#[test]
fn eval_is_reproducible() {
    let pb = fixture("P_B.json");
    let args = ["eval", "--pop", pb.to_str().unwrap(), "--walks", "100000", "--seed", "7"];
    let (a, b) = (run(&args), run(&args));
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("1/3"));
    assert!(stdout(&a).contains("2/3"));
}

#[test]
fn eval_output_is_worker_independent() {
    let pb = fixture("P_B.json");
    let base = ["eval", "--pop", pb.to_str().unwrap(), "--walks", "20000", "--seed", "3", "--workers"];
    let one = run(&[&base[..], &["1"]].concat());
    let four = run(&[&base[..], &["4"]].concat());
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn duplicate_state_is_rejected() {
    let bad = fixture("bad.json");
    let o = run(&["mix", "--pop", bad.to_str().unwrap(), "--steps", "10", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(EXIT_VALIDATION));
    assert!(stderr(&o).contains("state (1,a) occurs more than once"), "{}", stderr(&o));
}

#[test]
fn duplicate_terminal_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dup.json");
    std::fs::write(
        &path,
        r#"{"payoffs":{"f1":1},"rollouts":[
            {"action":"alpha","states":[[1,"a"]],"terminal":"f1"},
            {"action":"alpha","states":[[1,"b"]],"terminal":"f1"}]}"#,
    )
    .unwrap();
    let o = run(&["limit", "--pop", path.to_str().unwrap(), "--schema", "#"]);
    assert_eq!(o.status.code(), Some(EXIT_VALIDATION));
    assert!(stderr(&o).contains("terminal f1 occurs more than once"), "{}", stderr(&o));
}

#[test]
fn truncated_file_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.json");
    let text = std::fs::read_to_string(fixture("P_A.json")).unwrap();
    std::fs::write(&path, &text[..text.len() / 2]).unwrap();
    let o = run(&["limit", "--pop", path.to_str().unwrap(), "--schema", "#"]);
    assert_eq!(o.status.code(), Some(EXIT_VALIDATION));
    assert!(o.stdout.is_empty());
}

#[test]
fn missing_file_and_bad_flags_are_usage_errors() {
    let o = run(&["limit", "--pop", "/nonexistent/pop.json", "--schema", "#"]);
    assert_eq!(o.status.code(), Some(EXIT_USAGE));
    let o = run(&["eval", "--walks", "ten"]);
    assert_eq!(o.status.code(), Some(EXIT_USAGE));
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(EXIT_USAGE));
}

#[test]
fn orbit_cap_is_enforced() {
    let pa = fixture("P_A.json");
    let o = run(&["orbit", "--pop", pa.to_str().unwrap(), "--schema", "alpha,1,2,f1", "--cap", "5"]);
    assert_eq!(o.status.code(), Some(EXIT_CAP));
    let o = run(&["orbit", "--pop", pa.to_str().unwrap(), "--schema", "alpha,1,2,f1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("2/9"));
}

#[test]
fn canonical_fixture_is_byte_stable() {
    let path = fixture("P_A.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let f = read_population(&path).unwrap();
    assert_eq!(canonical_string(&population_to_json(&f)), text);
}

#[test]
fn gen_then_limit_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let pop = dir.path().join("pop.json");
    let env = fixture("env.json");
    let o = run(&["gen", "--env", env.to_str().unwrap(), "--seed", "5", "--out", pop.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = std::fs::read(&pop).unwrap();
    let o = run(&["limit", "--pop", pop.to_str().unwrap(), "--schema", "#"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("\"1/1\""));
    run(&["gen", "--env", env.to_str().unwrap(), "--seed", "5", "--out", pop.to_str().unwrap()]);
    assert_eq!(std::fs::read(&pop).unwrap(), first);
}
