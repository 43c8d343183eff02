//! End-to-end checks of the `handoff` binary: exit codes, diagnostics
//! on stderr, log output and timeline rendering.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_handoff"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn validate_good_scenario_exits_zero() {
    let out = bin()
        .args(["validate"])
        .arg(fixture("caseA.scenario"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "ok");
}

#[test]
fn validate_reports_located_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.machine");
    std::fs::write(&path, "version: 1\nmachine: M\nwhat: ever\n").unwrap();
    let out = bin().arg("validate").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("3:1: error: unknown field"), "{err}");
}

#[test]
fn validate_rejects_two_engines_per_domain() {
    let dir = tempfile::tempdir().unwrap();
    let noop = "version: 1\nmachine: N\ninitial: W\nterminal: finished\n\
        state: W\nkind: atomic\nserver: timer\nactuator: delay\ntarget: 0\n\
        success: done\nabort: done\nend: state\n\
        transition: W / done -> !finished\ntransition: W / rejected -> !finished\nend: machine\n";
    std::fs::write(dir.path().join("noop.machine"), noop).unwrap();
    let scenario = "version: 1\nmission: m\nhorizon: 1000\n\
        robot: a\ndomain: 1\nbehavior: noop.machine\nend: robot\n\
        robot: b\ndomain: 1\nbehavior: noop.machine\nend: robot\n";
    let path = dir.path().join("clash.scenario");
    std::fs::write(&path, scenario).unwrap();
    let out = bin().arg("validate").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("one engine per domain"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn run_case_b_reports_wait_separately() {
    let out = bin()
        .args(["run", "--stats"])
        .arg(fixture("caseB.scenario"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("publish wait"), "{err}");
    assert!(err.contains("trigger latency"), "{err}");
    assert!(stdout(&out).starts_with("# handoff-log v1"));
}

#[test]
fn run_is_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.log");
    let second = dir.path().join("b.log");
    for out in [&first, &second] {
        let status = bin()
            .arg("run")
            .arg(fixture("caseA.scenario"))
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(
        std::fs::read(&first).unwrap(),
        std::fs::read(&second).unwrap()
    );
    let reseeded = bin()
        .args(["run", "--seed", "7"])
        .arg(fixture("caseA.scenario"))
        .output()
        .unwrap();
    assert!(reseeded.status.success());
    assert_ne!(
        stdout(&reseeded).into_bytes(),
        std::fs::read(&first).unwrap()
    );
}

#[test]
fn timeline_from_scenario_and_saved_log_agree() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("case.log");
    assert!(bin()
        .arg("run")
        .arg(fixture("caseB.scenario"))
        .arg("--out")
        .arg(&log)
        .status()
        .unwrap()
        .success());
    let from_scenario = bin()
        .arg("timeline")
        .arg(fixture("caseB.scenario"))
        .output()
        .unwrap();
    let from_log = bin().arg("timeline").arg(&log).output().unwrap();
    assert!(from_scenario.status.success());
    assert_eq!(stdout(&from_scenario), stdout(&from_log));
    let text = stdout(&from_scenario);
    assert!(text.contains("legend:"), "{text}");
    // Structured format round-trips to the exact saved log.
    let structured = bin()
        .args(["timeline", "--format", "structured"])
        .arg(&log)
        .output()
        .unwrap();
    assert_eq!(
        stdout(&structured).into_bytes(),
        std::fs::read(&log).unwrap()
    );
}

#[test]
fn usage_errors_exit_two() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_file_exits_one() {
    let out = bin().args(["run", "no-such.scenario"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
