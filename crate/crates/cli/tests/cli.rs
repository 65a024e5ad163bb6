use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use trustgrid::sim::sweep::SweepConfig;
use trustgrid::sim::ScenarioConfig;
use trustgrid_cli::dynamics::DynamicsConfig;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn trustgrid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trustgrid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_cmd(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    trustgrid(&args)
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn first_line(path: &Path) -> String {
    read(path).lines().next().unwrap_or_default().to_string()
}

/// Compares against a stored file; `UPDATE_GOLDEN=1` rewrites it.
fn check_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
        return;
    }
    assert_eq!(read(&path), actual, "golden file {name} differs");
}

#[test]
fn missing_config_exits_2() {
    let dir = TempDir::new().unwrap();
    let out = run_cmd("run", &dir.path().join("nope.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));
}

#[test]
fn malformed_config_exits_2_with_diagnostics() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"n_agents": 5, "malicious": [9]}"#).unwrap();
    let out = run_cmd("run", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside 1..=5"));

    fs::write(&cfg, r#"{"n_agents": 5, "colour": "red"}"#).unwrap();
    let out = trustgrid(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn grid_path_is_resolved_next_to_the_config() {
    let dir = TempDir::new().unwrap();
    let case = trustgrid::estimation::GridCase::builtin("case5").unwrap();
    fs::create_dir(dir.path().join("cases")).unwrap();
    fs::write(dir.path().join("cases/five.json"), serde_json::to_string(&case).unwrap()).unwrap();
    let cfg = dir.path().join("scenario.json");
    fs::write(&cfg, r#"{"n_agents": 5, "grid": "cases/five.json", "n_samples": 3}"#).unwrap();
    let out = run_cmd("run", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&dir.path().join("o/se_errors.csv")).lines().count(), 4);

    fs::write(&cfg, r#"{"n_agents": 6, "grid": "cases/five.json"}"#).unwrap();
    assert_eq!(trustgrid(&["validate", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn five_bus_run_writes_the_trace() {
    let dir = TempDir::new().unwrap();
    let out = run_cmd("run", &configs().join("five_bus_one_malicious.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("agent 3 evicted at tick"), "{stdout}");

    let d = dir.path();
    assert_eq!(first_line(&d.join("trust.csv")), trustgrid_cli::output::TRUST_HEADER);
    assert_eq!(first_line(&d.join("reports.csv")), trustgrid_cli::output::REPORTS_HEADER);
    assert_eq!(first_line(&d.join("se_errors.csv")), trustgrid_cli::output::SE_ERRORS_HEADER);
    assert_eq!(first_line(&d.join("evictions.csv")), trustgrid_cli::output::EVICTIONS_HEADER);
    assert_eq!(read(&d.join("se_errors.csv")).lines().count(), 41);
    let elections: serde_json::Value = serde_json::from_str(&read(&d.join("elections.json"))).unwrap();
    assert!(!elections.as_array().unwrap().is_empty());
    check_golden("five_bus_summary.json", &read(&d.join("summary.json")));
    check_golden("five_bus_evictions.csv", &read(&d.join("evictions.csv")));
}

#[test]
fn json_format_writes_one_trace_file() {
    let dir = TempDir::new().unwrap();
    let out = run_cmd(
        "run",
        &configs().join("five_bus_one_malicious.json"),
        dir.path(),
        &["--format", "json"],
    );
    assert_eq!(out.status.code(), Some(0));
    let trace: serde_json::Value = serde_json::from_str(&read(&dir.path().join("trace.json"))).unwrap();
    assert_eq!(trace["config"]["malicious"], serde_json::json!([3]));
    assert!(!dir.path().join("trust.csv").exists());
}

#[test]
fn seed_override_changes_the_trace() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    let cfg = configs().join("five_bus_one_malicious.json");
    assert!(run_cmd("run", &cfg, a.path(), &[]).status.success());
    assert!(run_cmd("run", &cfg, b.path(), &["--seed", "99"]).status.success());
    assert!(run_cmd("run", &cfg, c.path(), &[]).status.success());
    let reports = |d: &TempDir| read(&d.path().join("reports.csv"));
    assert_ne!(reports(&a), reports(&b));
    assert_eq!(reports(&a), reports(&c));
}

#[test]
fn shipped_configs_round_trip() {
    let mut seen = 0;
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let text = read(&path);
        let status = trustgrid(&["validate", "--config", path.to_str().unwrap()]).status;
        assert!(status.success(), "{}", path.display());
        if let Ok(cfg) = ScenarioConfig::from_json(&text) {
            let again = ScenarioConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
            assert_eq!(cfg, again);
        } else if let Ok(cfg) = SweepConfig::from_json(&text) {
            let again = SweepConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
            assert_eq!(cfg, again);
        } else {
            let cfg = DynamicsConfig::from_json(&text).unwrap();
            let again = DynamicsConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
            assert_eq!(cfg, again);
        }
        seen += 1;
    }
    assert!(seen >= 6);
}

fn write_sweep(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("sweep.json");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn sweep_grid_produces_one_row_per_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write_sweep(
        dir.path(),
        r#"{"n_agents": [5], "malicious_counts": [1, 2], "seeds": 20,
            "include_stress": true, "max_ticks": 20000}"#,
    );
    let out = run_cmd("sweep", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read(&dir.path().join("o/rows.csv"));
    assert_eq!(rows.lines().count(), 81);
    assert_eq!(rows.lines().next().unwrap(), trustgrid_cli::sweep::ROWS_HEADER);
    let cells = read(&dir.path().join("o/cells.csv"));
    assert_eq!(cells.lines().count(), 5);
    assert_eq!(cells.lines().next().unwrap(), trustgrid_cli::sweep::CELLS_HEADER);
}

#[test]
fn sweep_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("sweep_small.json");
    let one = dir.path().join("one");
    let two = dir.path().join("two");
    assert!(run_cmd("sweep", &cfg, &one, &["--seed", "3"]).status.success());
    assert!(run_cmd("sweep", &cfg, &two, &["--seed", "3", "--jobs", "3"]).status.success());
    for f in ["rows.csv", "cells.csv"] {
        assert_eq!(read(&one.join(f)), read(&two.join(f)));
    }
    check_golden("sweep_small_cells.csv", &read(&one.join("cells.csv")));
}

#[test]
fn empty_sweep_grid_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_sweep(dir.path(), r#"{"n_agents": [], "malicious_counts": [1], "seeds": 5}"#);
    assert_eq!(run_cmd("sweep", &cfg, &dir.path().join("o"), &[]).status.code(), Some(2));
}

fn dynamics_report(config: &str, dir: &Path) -> serde_json::Value {
    let out = run_cmd("dynamics", &configs().join(config), dir, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_str(&read(&dir.join("report.json"))).unwrap()
}

#[test]
fn dynamics_from_full_trust_settles_at_p_star() {
    let dir = TempDir::new().unwrap();
    let report = dynamics_report("dynamics_five.json", dir.path());
    assert_eq!(report["settlement"], "correct_identification");
    assert_eq!(report["drift_residual_p_star"], 0.0);
    assert_eq!(report["drift_residual_q"], 0.0);
    assert_eq!(report["threshold_violation"], false);
    assert_eq!(report["pass"], true);
    assert!(report["stochastic"]["fraction"].as_f64().unwrap() >= 0.95);
    assert_eq!(
        first_line(&dir.path().join("trajectory.csv")),
        trustgrid_cli::output::TRAJECTORY_HEADER
    );
    check_golden("dynamics_five_report.json", &read(&dir.path().join("report.json")));
}

#[test]
fn dynamics_from_near_q_settles_inverted() {
    let dir = TempDir::new().unwrap();
    let report = dynamics_report("dynamics_near_q.json", dir.path());
    assert_eq!(report["settlement"], "inverted");
    assert_eq!(report["pass"], true);
}

#[test]
fn dynamics_flags_threshold_violation() {
    let dir = TempDir::new().unwrap();
    let report = dynamics_report("dynamics_threshold.json", dir.path());
    assert_eq!(report["threshold_violation"], true);
    assert_eq!(report["within_nominal_bound"], false);
}

#[test]
fn dynamics_rejects_bad_parameters() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("d.json");
    for body in [
        r#"{"n_agents": 5, "honest": [1], "dt": 2.0}"#,
        r#"{"n_agents": 5, "honest": []}"#,
        r#"{"n_agents": 5, "honest": [6]}"#,
    ] {
        fs::write(&cfg, body).unwrap();
        assert_eq!(run_cmd("dynamics", &cfg, &dir.path().join("o"), &[]).status.code(), Some(2), "{body}");
    }
}
