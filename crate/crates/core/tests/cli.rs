use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_collab-balance"))
}

fn scenarios() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

#[test]
fn run_writes_outputs() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["run", "--scenario"])
        .arg(scenarios().join("push_recoverable.toml"))
        .arg("--out")
        .arg(out.path())
        .args(["--seed", "3"])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.path().join("timeseries.csv")).unwrap();
    assert_eq!(csv.lines().count(), 602);
    assert!(out.path().join("summary.txt").exists());
}

#[test]
fn dt_override_changes_row_count() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["run", "--scenario"])
        .arg(scenarios().join("standing.toml"))
        .arg("--out")
        .arg(out.path())
        .args(["--seed", "0", "--dt", "0.01"])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.path().join("timeseries.csv")).unwrap();
    assert_eq!(csv.lines().count(), 202);
}

#[test]
fn invalid_scenario_fails() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nduration = -1.0\n").unwrap();
    let output = bin().args(["run", "--scenario"]).arg(&bad).arg("--out").arg(dir.path()).output().unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("duration"));
}

#[test]
fn wrist_opt_writes_trace() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["wrist-opt", "--method", "grid", "--grid", "3", "--out"])
        .arg(out.path())
        .status()
        .unwrap();
    assert!(status.success());
    let trace = std::fs::read_to_string(out.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "iteration,horn1,horn2,limb1,limb2,gcn");
    assert!(trace.lines().count() > 1);
    assert!(std::fs::read_to_string(out.path().join("result.txt")).unwrap().contains("gcn: "));
}

#[test]
fn literal_wrist_bounds_fail_cleanly() {
    let out = tempfile::tempdir().unwrap();
    let output = bin()
        .args(["wrist-opt", "--method", "grid", "--grid", "3", "--paper-bounds", "--out"])
        .arg(out.path())
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("no feasible geometry"));
}

#[test]
fn needle_logs_pressures() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["needle", "--profile"])
        .arg(scenarios().join("needle_profile.csv"))
        .arg("--out")
        .arg(out.path())
        .args(["--seed", "5"])
        .status()
        .unwrap();
    assert!(status.success());
    let log = std::fs::read_to_string(out.path().join("pressure_log.csv")).unwrap();
    assert_eq!(log.lines().next().unwrap(), "time_s,finger_id,pressure_Pa,event_flag");
    assert!(log.lines().any(|l| l.ends_with(",-1")));
    assert!(std::fs::read_to_string(out.path().join("summary.txt")).unwrap().contains("stop_time: 1.5"));
}

#[test]
fn nelder_mead_alone_finds_a_feasible_design() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["wrist-opt", "--method", "nelder_mead", "--grid", "3", "--seed", "1", "--out"])
        .arg(out.path())
        .status()
        .unwrap();
    assert!(status.success());
}
