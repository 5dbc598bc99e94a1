mod common;

use std::process::{Command, Output};

use common::fixture_path;

fn blockgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blockgen")).args(args).output().expect("spawn blockgen")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture(name: &str) -> String {
    fixture_path(name).display().to_string()
}

#[test]
fn generate_writes_the_c_unit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig2.c");
    let o = blockgen(&["generate", &fixture("fig2.json"), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with(&format!("wrote {}: 3 statics, 3 functions,", out.display())));
    let c = std::fs::read_to_string(&out).unwrap();
    assert!(c.contains("void toto1000(scicos_block *block,int flag)"));
}

#[test]
fn generate_freestanding_has_no_runtime_accessors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("coding.c");
    let o = blockgen(&["generate", &fixture("coding.json"), "--out", out.to_str().unwrap(), "--emit", "freestanding"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let c = std::fs::read_to_string(&out).unwrap();
    assert!(!c.contains("scicos_block") && !c.contains("GetRealInPortPtrs"), "{c}");
    assert!(c.contains("updateOutput10043"));
}

#[test]
fn no_dce_keeps_more_code() {
    let model = fixture("kalman.json");
    let dump = |extra: &[&str]| {
        let mut args = vec!["dump-ir", model.as_str()];
        args.extend_from_slice(extra);
        let o = blockgen(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o).lines().count()
    };
    assert!(dump(&["--no-dce"]) > dump(&[]));
}

#[test]
fn dump_ir_lists_functions() {
    let o = blockgen(&["dump-ir", &fixture("fig2.json")]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("static f64 1x1 z_10001 = [0.0]"), "{s}");
    assert!(s.contains("fn updateOutput10001("), "{s}");
}

#[test]
fn simulate_prints_header_and_rows() {
    let o = blockgen(&["simulate", &fixture("fig2.json"), "--steps", "0"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "step\tout1[0]\tout1[1]\n");

    let o = blockgen(&["simulate", &fixture("coding.json"), "--steps", "3", "--stimulus", "binary"]);
    let s = stdout(&o);
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "step\tout1[0]\tout2[0]");
    assert!(lines[1].starts_with("0\t0\t"), "{s}");
    // Same seed, same output.
    let again = blockgen(&["simulate", &fixture("coding.json"), "--steps", "3", "--stimulus", "binary"]);
    assert_eq!(stdout(&again), s);
}

#[test]
fn validate_reports_equivalence() {
    let o = blockgen(&["validate", &fixture("coding.json"), "--steps", "50", "--stimulus", "binary", "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("steps=50") && stdout(&o).contains("equivalent"));
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"id": 1, "blocks": [], "links": [], "bogus": 1}"#).unwrap();
    let o = blockgen(&["generate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: "), "{}", stderr(&o));

    let o = blockgen(&["simulate", "/nonexistent/model.json"]);
    assert_eq!(o.status.code(), Some(1));

    let o = blockgen(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}
