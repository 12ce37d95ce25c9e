//! End-to-end checks of the `forma` binary: exit codes, artifacts, and
//! output stability.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn forma() -> Command {
    Command::new(env!("CARGO_BIN_EXE_forma"))
}

fn scenario_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/mission_baseline.json")
}

/// Threat-free two-vehicle scenario that solves in milliseconds per step.
fn small_scenario(dir: &Path) -> PathBuf {
    let doc = serde_json::json!({
        "uavs": [
            {"id": "A", "role": "reconnaissance", "position_m": [0.0, 0.0, 100.0],
             "v_min": 0.0, "v_max": 80.0, "dv_max": 5.0, "yaw_rate_max_deg": 2.0, "vz_max": 10.0,
             "initial_heading_rad": 0.0, "initial_speed_mps": 20.0},
            {"id": "B", "role": "reconnaissance", "position_m": [0.0, 500.0, 100.0],
             "v_min": 0.0, "v_max": 80.0, "dv_max": 5.0, "yaw_rate_max_deg": 2.0, "vz_max": 10.0,
             "initial_heading_rad": 0.0, "initial_speed_mps": 20.0}
        ],
        "formation": {
            "leader_path": {"origin_m": [0.0, 0.0, 100.0], "velocity_mps": 20.0, "direction": [1.0, 0.0, 0.0]},
            "offsets_m": {"A": [0.0, 0.0, 0.0], "B": [0.0, 500.0, 0.0]},
            "weights": {"A": 0.5, "B": 0.5},
            "d_min_m": 40.0,
            "r_max_m": 10000.0,
            "control_weight_diag": [0.0001, 2.0, 0.001]
        }
    });
    let path = dir.join("small.json");
    std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    path
}

fn run_ok(output: &Output) -> String {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).to_string()
}

#[test]
fn run_writes_artifacts_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path());
    let out_dir = dir.path().join("results");
    let output = forma()
        .args(["run", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(&out_dir)
        .args(["--duration", "5"])
        .output()
        .unwrap();
    let stdout = run_ok(&output);
    assert!(stdout.contains("p_r=") && stdout.contains("failed="));
    assert!(out_dir.join("trajectory.csv").exists());
    assert!(out_dir.join("metrics.json").exists());
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["total_steps"], 5);
}

#[test]
fn missing_scenario_exits_2_naming_the_path() {
    let output = forma()
        .args(["run", "--scenario", "missing.json"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("missing.json"));
}

#[test]
fn fractional_dt_changes_step_count() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path());
    let out_dir = dir.path().join("halfstep");
    let output = forma()
        .args(["run", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(&out_dir)
        .args(["--dt", "0.5", "--duration", "10"])
        .output()
        .unwrap();
    run_ok(&output);
    let csv = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    // Header plus one row per vehicle per applied step: 10 / 0.5 = 20 steps.
    assert_eq!(csv.lines().count(), 1 + 20 * 2);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["total_steps"], 20);
}

#[test]
fn identical_invocations_produce_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path());
    let mut outputs = Vec::new();
    for name in ["first", "second"] {
        let out_dir = dir.path().join(name);
        let output = forma()
            .args(["run", "--scenario"])
            .arg(&scenario)
            .arg("--out")
            .arg(&out_dir)
            .args(["--duration", "5"])
            .output()
            .unwrap();
        run_ok(&output);
        outputs.push(std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn solve_qp_ineq_reports_the_active_bound() {
    let output = forma()
        .args([
            "solve",
            "--problem",
            "qp-ineq",
            "--xi",
            "1e-8",
            "--sigma",
            "1e-8",
        ])
        .output()
        .unwrap();
    let stdout = run_ok(&output);
    assert!(stdout.contains("Converged"));
    let line = stdout
        .lines()
        .find(|l| l.starts_with("final point"))
        .expect("final point line");
    let x: f64 = line
        .split(|c| c == '[' || c == ']')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((x - 1.0).abs() <= 1e-5, "final x = {x}");
}

#[test]
fn solve_eq_only_reports_the_analytic_point() {
    let output = forma()
        .args(["solve", "--problem", "eq-only", "--xi", "1e-9"])
        .output()
        .unwrap();
    let stdout = run_ok(&output);
    let line = stdout
        .lines()
        .find(|l| l.starts_with("final point"))
        .unwrap();
    for part in line
        .split(|c| c == '[' || c == ']')
        .nth(1)
        .unwrap()
        .split(',')
    {
        let v: f64 = part.trim().parse().unwrap();
        assert!((v - 1.0).abs() <= 1e-6, "component {v}");
    }
}

#[test]
fn solve_with_one_iteration_reports_nonzero_exit() {
    let output = forma()
        .args(["solve", "--problem", "circle", "--max-iters", "1", "--xi", "1e-10"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("MaxIters"));
}

#[test]
fn unknown_problem_exits_2() {
    let output = forma().args(["solve", "--problem", "nope"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn check_grad_passes_on_the_bundled_scenario() {
    let output = forma()
        .args(["check-grad", "--scenario"])
        .arg(scenario_path())
        .args(["--points", "1", "--horizon", "4"])
        .output()
        .unwrap();
    let stdout = run_ok(&output);
    assert!(stdout.contains("checked 1 points"));
    assert!(stdout.contains("all derivatives within"));
}

#[test]
fn check_grad_flags_an_injected_gradient_bug() {
    let output = forma()
        .args(["check-grad", "--scenario"])
        .arg(scenario_path())
        .args(["--points", "1", "--horizon", "2", "--inject-gradient-bug"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("objective_grad"));
}

#[test]
fn metrics_subcommand_recomputes_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path());
    let out_dir = dir.path().join("for_metrics");
    run_ok(
        &forma()
            .args(["run", "--scenario"])
            .arg(&scenario)
            .arg("--out")
            .arg(&out_dir)
            .args(["--duration", "5"])
            .output()
            .unwrap(),
    );
    let output = forma()
        .args(["metrics", "--scenario"])
        .arg(&scenario)
        .arg("--trajectory")
        .arg(out_dir.join("trajectory.csv"))
        .output()
        .unwrap();
    let stdout = run_ok(&output);
    let recomputed: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    let original: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(recomputed["p_r"].as_f64(), original["p_r"].as_f64());
    assert_eq!(recomputed["p_m"].as_f64(), original["p_m"].as_f64());
    assert_eq!(recomputed["total_steps"], original["total_steps"]);
}
