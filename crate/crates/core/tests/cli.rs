mod support;

use std::path::Path;
use std::process::{Command, Output};

use epcaw::harness::{read_trace, RunReport};

use support::fixture;

fn epcaw(args: &[&str], trace_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epcaw"))
        .args(args)
        .arg("--dataset")
        .arg(fixture("toy.jsonl"))
        .arg("--tool-fixtures")
        .arg(fixture("search.json"))
        .arg("--trace-dir")
        .arg(trace_dir)
        .output()
        .expect("binary runs")
}

fn report(dir: &Path) -> RunReport {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn toy_run_writes_traces_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let script = fixture("toy_script.json");
    let out = epcaw(
        &[
            "--mode",
            "no-repair",
            "--no-compare",
            "--script",
            script.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("mode: no-repair"), "{stdout}");
    assert!(stdout.contains("60.00"), "{stdout}");

    let r = report(dir.path());
    assert_eq!(r.traces.len(), 5);
    for path in &r.traces {
        assert!(path.starts_with(dir.path().join("no-repair").join("toy")));
        read_trace(path).unwrap();
    }
    assert!(dir.path().join("report.txt").exists());
}

#[test]
fn baseline_comparison_reports_a_delta() {
    let dir = tempfile::tempdir().unwrap();
    let script = fixture("toy_script.json");
    let out = epcaw(
        &[
            "--compare",
            "no-repair",
            "--script",
            script.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = report(dir.path());
    let toy = &r.metrics.datasets[0];
    assert_eq!(
        (toy.accuracy, toy.baseline_accuracy, toy.delta),
        (100.0, Some(60.0), Some(40.0))
    );
    assert_eq!(r.metrics.baseline.as_deref(), Some("no-repair"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("+40.00"));
}

#[test]
fn unknown_mode_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = epcaw(&["--mode", "bogus"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scripted_backend_needs_a_script() {
    let dir = tempfile::tempdir().unwrap();
    let out = epcaw(&["--no-compare"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--script"));
}

#[test]
fn script_misses_are_reported_as_task_failures() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, r#"{"version": 1}"#).unwrap();
    let out = epcaw(
        &["--no-compare", "--script", empty.to_str().unwrap()],
        &dir.path().join("traces"),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("failed"));
}
