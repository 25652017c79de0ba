//! Black-box tests against the compiled binary: output files, exit codes,
//! and config layering.

use std::path::Path;
use std::process::{Command, Output};
use tempfile::tempdir;

fn edgeloop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgeloop"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn data_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn preset_run_writes_every_output_file() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("run");
    let result = edgeloop(&[
        "--scenario",
        "helical-profile-A",
        "--profile",
        "profile-A-exact",
        "--duration",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr(&result));
    for name in
        ["trace.csv", "summary.txt", "manifest.toml", "trajectory3d.dat", "delays.dat", "error.dat"]
    {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let text = stdout(&result);
    assert!(text.contains("mean   14.200"), "stdout: {text}");
    assert!(text.contains("mean   16.100"), "stdout: {text}");
    assert!(text.contains("mean   17.600"), "stdout: {text}");
    assert!(text.contains("mean   47.900"), "stdout: {text}");
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(text.starts_with(&summary), "stdout should begin with the summary file");
}

#[test]
fn profile_b_reports_its_round_trip() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("run");
    let result = edgeloop(&[
        "--scenario",
        "helical-profile-B",
        "--profile",
        "profile-B-exact",
        "--duration",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let text = stdout(&result);
    assert!(text.contains("mean   39.500"), "stdout: {text}");
}

#[test]
fn one_second_at_100hz_yields_100_rows() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("run");
    let result = edgeloop(&[
        "--scenario",
        "hover-ideal",
        "--duration",
        "1",
        "--rate",
        "100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    assert_eq!(data_rows(&out.join("trace.csv")), 100);
    assert_eq!(data_rows(&out.join("delays.dat")), 100);
    assert_eq!(data_rows(&out.join("error.dat")), 100);
}

#[test]
fn rerun_from_manifest_reproduces_trace_bytes() {
    let dir = tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let result = edgeloop(&[
        "--scenario",
        "helical-profile-A",
        "--duration",
        "2",
        "--seed",
        "7",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let manifest = first.join("manifest.toml");
    let result = edgeloop(&[
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr(&result));
    let a = std::fs::read(first.join("trace.csv")).unwrap();
    let b = std::fs::read(second.join("trace.csv")).unwrap();
    assert_eq!(a, b, "manifest replay must be byte-identical");
}

#[test]
fn scenario_named_inside_config_file_is_the_base() {
    let dir = tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "scenario = \"helical-profile-A\"\nduration = 0.5\n").unwrap();
    let out = dir.path().join("run");
    let result =
        edgeloop(&["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(result.status.success(), "stderr: {}", stderr(&result));
    let manifest = std::fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("mean_ms = 14.2"), "manifest: {manifest}");
    assert!(manifest.contains("mean_ms = 17.6"), "manifest: {manifest}");
    assert_eq!(data_rows(&out.join("trace.csv")), 50);
}

#[test]
fn flags_override_config_file() {
    let dir = tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "scenario = \"hover-ideal\"\nseed = 3\nduration = 1.0\n").unwrap();
    let out = dir.path().join("run");
    let result = edgeloop(&[
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "9",
        "--duration",
        "0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let manifest = std::fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 9"), "manifest: {manifest}");
    assert!(manifest.contains("duration = 0.5"), "manifest: {manifest}");
}

#[test]
fn unknown_scenario_exits_1() {
    let result = edgeloop(&["--scenario", "figure-eight"]);
    assert_eq!(result.status.code(), Some(1));
    assert!(stderr(&result).contains("unknown scenario"));
}

#[test]
fn missing_config_file_exits_1() {
    let result = edgeloop(&["--config", "/nonexistent/path.toml"]);
    assert_eq!(result.status.code(), Some(1));
    assert!(stderr(&result).contains("cannot read config"));
}

#[test]
fn malformed_toml_exits_1_with_line_anchor() {
    let dir = tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "seed = 1\nduration = [not valid\n").unwrap();
    let result = edgeloop(&["--config", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));
    assert!(stderr(&result).contains("line 2"), "stderr: {}", stderr(&result));
}

#[test]
fn unknown_key_exits_1() {
    let dir = tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "velocity_limit = 3.0\n").unwrap();
    let result = edgeloop(&["--config", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));
    assert!(stderr(&result).contains("velocity_limit"), "stderr: {}", stderr(&result));
}

#[test]
fn invariant_violation_names_the_field() {
    let dir = tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "scenario = \"hover-ideal\"\ncontrol_rate = 0.0\n").unwrap();
    let result = edgeloop(&["--config", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));
    assert!(stderr(&result).contains("control_rate"), "stderr: {}", stderr(&result));
}

#[test]
fn help_version_and_list_exit_0() {
    for args in [&["--help"][..], &["--version"][..], &["--list"][..]] {
        let result = edgeloop(args);
        assert_eq!(result.status.code(), Some(0), "args: {args:?}");
    }
    let list = stdout(&edgeloop(&["--list"]));
    assert!(list.contains("helical-profile-A"));
    assert!(list.contains("profile-A-exact"));
}

#[test]
fn unknown_flag_exits_1() {
    let result = edgeloop(&["--frobnicate"]);
    assert_eq!(result.status.code(), Some(1));
}

#[test]
fn realtime_mode_runs_via_flags() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("run");
    let result = edgeloop(&[
        "--scenario",
        "hover-ideal",
        "--mode",
        "realtime",
        "--exec-model",
        "simulated:1",
        "--duration",
        "0.3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr(&result));
    assert_eq!(data_rows(&out.join("trace.csv")), 30);
}

#[test]
fn measured_exec_in_deterministic_mode_exits_1() {
    let result = edgeloop(&["--scenario", "hover-ideal", "--exec-model", "measured"]);
    assert_eq!(result.status.code(), Some(1));
    assert!(stderr(&result).contains("exec_model"), "stderr: {}", stderr(&result));
}
