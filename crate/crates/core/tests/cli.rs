use std::path::Path;
use std::process::{Command, Output};

const EXE: &str = env!("CARGO_BIN_EXE_orthomeasure");

fn run(args: &[&str]) -> Output {
    Command::new(EXE).args(args).env_remove("ORTHOMEASURE_THREADS").output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn passing_run_exits_zero_with_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.json", r#"{"kind": "axioms", "sizes": {"scenarios": 16, "atoms": 4, "trials": 5}}"#);
    let out = run(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["kind"], "axioms");
    assert_eq!(report["passed"], true);
    // Top-level keys sit at two spaces of indentation, in declaration order.
    let text = String::from_utf8(out.stdout).unwrap();
    let keys: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("  \"") && !l.starts_with("   "))
        .map(|l| l.trim().split('"').nth(1).unwrap())
        .collect();
    assert_eq!(
        keys,
        ["schema_version", "kind", "mode", "seed", "sizes", "tolerances", "records", "passed", "wall_time_seconds"]
    );
}

#[test]
fn failing_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // Level 3 cannot resolve lag 2, so that record fails.
    let cfg = write(dir.path(), "s.json", r#"{"kind": "spectral", "sizes": {"scenarios": 50, "level": 3, "lags": 2}}"#);
    let out = run(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL spectral.covariance[2]"));
}

#[test]
fn config_and_usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "u.json", "{\n  \"kind\": \"bogus\"\n}");
    let out = run(&["run", &unknown]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("u.json:2:"), "{stderr}");

    let field = write(dir.path(), "f.json", r#"{"kind": "axioms", "tolerances": {"relative": -1}}"#);
    let out = run(&["run", &field]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tolerances.relative"));

    assert_eq!(run(&["run", "/nonexistent/config.json"]).status.code(), Some(2));
    assert_eq!(run(&["run"]).status.code(), Some(2));
    assert_eq!(run(&["run", &field, "--mode", "sideways"]).status.code(), Some(2));

    let ok = write(dir.path(), "ok.json", r#"{"kind": "approximation", "sizes": {"trials": 2}}"#);
    let out = Command::new(EXE).args(["run", &ok]).env("ORTHOMEASURE_THREADS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"kind": "isometry", "seed": 1, "sizes": {"scenarios": 500, "atoms": 4, "trials": 3}}"#,
    );
    let report_path = dir.path().join("report.csv");
    let out = run(&[
        "run",
        &cfg,
        "--seed",
        "42",
        "--mode",
        "ensemble",
        "--format",
        "csv",
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert!(out.stdout.is_empty());
    let csv = std::fs::read_to_string(&report_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("name,lhs,rhs,gap,tolerance,passed,detail"));
    assert!(lines.next().unwrap().starts_with("isometry.share_within_relative,"));
    assert!(lines.next().is_none());

    let json_path = dir.path().join("report.json");
    run(&["run", &cfg, "--seed", "42", "--mode", "ensemble", "--out", json_path.to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(report["seed"], 42);
    assert_eq!(report["mode"], "ensemble");
}

#[test]
fn floats_carry_seventeen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"kind": "isometry", "sizes": {"scenarios": 8, "atoms": 3, "trials": 4}}"#);
    let out = run(&["run", &cfg]);
    let text = String::from_utf8(out.stdout).unwrap();
    let gap_line = text.lines().find(|l| l.trim_start().starts_with("\"gap\"")).unwrap();
    let number = gap_line.split(':').nth(1).unwrap().trim().trim_end_matches(',');
    let mantissa = number.split('e').next().unwrap().replace(['-', '.'], "");
    assert_eq!(mantissa.len(), 17, "{number}");
}
