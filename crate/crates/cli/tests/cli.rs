//! The `ctxeq` binary: exit codes, JSON output and bench behaviour.

use ctxeq_cli::validate_report_json;
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn corpus(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(rel)
}

fn ctxeq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxeq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn check(rel: &str, extra: &[&str]) -> Output {
    let path = corpus(rel);
    let mut args = vec!["check", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    ctxeq(&args)
}

#[test]
fn exit_codes_follow_verdicts() {
    assert_eq!(check("eq/conjunction.prog", &[]).status.code(), Some(0));
    assert_eq!(check("ineq/const-thunk.prog", &[]).status.code(), Some(1));
    assert_eq!(
        check("limitations/well-bracketed.prog", &[]).status.code(),
        Some(2)
    );
    let missing = ctxeq(&["check", "/nonexistent/file.prog"]);
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn parse_errors_exit_3() {
    let dir = std::env::temp_dir().join(format!("ctxeq-parse-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let f = dir.join("bad.prog");
    std::fs::write(&f, "fun x -> \n|||\n1\n").unwrap();
    let out = ctxeq(&["check", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn json_reports_validate_on_the_corpus() {
    for sub in ["eq", "ineq", "limitations"] {
        for path in ctxeq_cli::corpus_files(&corpus(sub)).unwrap() {
            let out = ctxeq(&["check", path.to_str().unwrap(), "--json"]);
            let v: Value = serde_json::from_slice(&out.stdout).expect("json on stdout");
            validate_report_json(&v).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        }
    }
}

#[test]
fn witness_json_has_trace_and_model() {
    let out = check("ineq/arg-order.prog", &["--json"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"], "inequivalent");
    let trace = v["trace"].as_array().unwrap();
    assert!(!trace.is_empty());
    assert!(trace
        .iter()
        .all(|s| s["move"].is_string() && s["side"].is_string()));
    assert!(v["model"].is_object());
}

#[test]
fn no_annot_disables_reentry() {
    let out = check("eq/reentry.prog", &["--no-annot", "--json"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["stats"]["reentry_skips"], 0);
    assert_eq!(v["stats"]["inv_applied"], 0);
    let out = check("eq/reentry.prog", &["--json"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"], "equivalent");
}

#[test]
fn explain_logs_to_stderr() {
    let out = check("eq/sep.prog", &["--explain"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("SEP split"));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("equivalent"));
}

#[test]
fn bound_flag_overrides_header() {
    // the violator needs bound 8; at 2 it cannot be told apart
    let out = check("ineq/well-bracketing-violator.prog", &["--bound", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_bench_dir() {
    let dir = std::env::temp_dir().join(format!("ctxeq-empty-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out = ctxeq(&["bench", dir.to_str().unwrap(), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["false_verdicts"], 0);
    assert!(v["configs"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["files"].as_array().unwrap().is_empty()));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn bench_flags_false_verdicts() {
    let dir = std::env::temp_dir().join(format!("ctxeq-false-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    // claims equivalence of programs that differ
    std::fs::write(
        dir.join("wrong.prog"),
        "(* expect: eq *)\nfun () -> 0\n|||\nfun () -> 1\n",
    )
    .unwrap();
    let out = ctxeq(&["bench", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("wrong.prog"));
    std::fs::remove_dir_all(dir).unwrap();
}
