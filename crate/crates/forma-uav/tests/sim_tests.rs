//! Scenario loading, communication graph, metrics, closed-loop behavior on
//! small scenarios, and artifact round-trips.

use forma_uav::scenario::{validate_scenario, ScenarioFile};
use forma_uav::{
    build_comm_graph, compute_metrics, is_connected, load_scenario, read_trajectory_csv, run,
    trajectory_from_rows, write_metrics_json, write_trajectory_csv, CommGraph, SimConfig,
};
use nalgebra::Vector3;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::path::{Path, PathBuf};

fn scenario_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/mission_baseline.json")
}

fn scenario_json() -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(scenario_path()).unwrap()).unwrap()
}

#[test]
fn bundled_scenario_loads_with_verbatim_positions() {
    let scenario = load_scenario(&scenario_path()).unwrap();
    assert_eq!(scenario.n_uavs(), 6);
    let expected = [
        ("V1", [0.0, 0.0, 500.0]),
        ("V2", [-500.0, -1500.0, -500.0]),
        ("V3", [-500.0, 0.0, -1000.0]),
        ("V4", [-500.0, 500.0, 1500.0]),
        ("V5", [-1000.0, -1000.0, 0.0]),
        ("V6", [-1000.0, -1000.0, 1000.0]),
    ];
    for (uav, (id, pos)) in scenario.uavs.iter().zip(expected) {
        assert_eq!(uav.id, id);
        assert_eq!(uav.initial_position, Vector3::from(pos));
        assert_eq!(uav.bounds.v_min, 15.0);
        assert_eq!(uav.bounds.v_max, 80.0);
        assert_eq!(uav.bounds.dv_max, 5.0);
    }
    assert_eq!(scenario.formation.d_min, 40.0);
    assert_eq!(scenario.formation.r_max, 10_000.0);
    assert_eq!(scenario.threats.radars.len(), 2);
    assert_eq!(scenario.threats.missiles.len(), 2);
    assert!((scenario.threats.missiles[0].aperture.to_degrees() - 30.0).abs() < 1e-12);
    // Formation offsets reproduce the tetrahedron edge lengths.
    let offs = &scenario.formation.offsets;
    for (a, b) in forma_uav::formation::tetrahedron_edge_pairs() {
        let d = (offs[a] - offs[b]).norm();
        assert!((d - 1000.0).abs() <= 1e-9, "edge ({a},{b}) length {d}");
    }
    // The lead vehicle's target coincides with the reference path.
    let targets = forma_uav::reference_positions(0.0, &scenario);
    assert_eq!(targets[0], scenario.formation.leader.position(0.0));
    let later = forma_uav::reference_positions(7.0, &scenario);
    assert_eq!(later[0], scenario.formation.leader.position(7.0));
}

#[test]
fn logged_states_replay_through_dynamics() {
    let scenario = quiescent_scenario();
    let cfg = SimConfig {
        duration_s: 8.0,
        ..SimConfig::default()
    };
    let out = run(&scenario, &cfg).unwrap();
    let mut state = scenario.initial_states()[0];
    for rec in &out.trajectory.steps {
        state = forma_uav::step_dynamics(&state, &rec.controls[0], cfg.dt_s);
        let err = (state.position - rec.states[0].position).norm();
        assert!(err <= 1e-9, "replay drift {err}");
        assert_eq!(state.speed, rec.states[0].speed);
    }
}

#[test]
fn empty_uav_list_is_rejected() {
    let mut doc = scenario_json();
    doc["uavs"] = serde_json::json!([]);
    let file: ScenarioFile = serde_json::from_value(doc).unwrap();
    let err = validate_scenario(file).unwrap_err();
    assert!(err.to_string().contains("uavs"));
}

#[test]
fn bad_weight_sum_is_rejected() {
    let mut doc = scenario_json();
    doc["formation"]["weights"]["V1"] = serde_json::json!(0.1);
    let file: ScenarioFile = serde_json::from_value(doc).unwrap();
    let err = validate_scenario(file).unwrap_err();
    assert!(err.to_string().contains("weights"));
}

#[test]
fn unknown_jammer_is_rejected() {
    let mut doc = scenario_json();
    doc["missiles"][0]["jammer_id"] = serde_json::json!("V9");
    let file: ScenarioFile = serde_json::from_value(doc).unwrap();
    assert!(validate_scenario(file).is_err());
}

#[test]
fn comm_graph_cases() {
    let r_max = 10_000.0;
    let two = vec![Vector3::zeros(), Vector3::new(1000.0, 0.0, 0.0)];
    let g = build_comm_graph(&two, r_max);
    assert_eq!(g.edges.len(), 1);
    assert!(is_connected(&g));

    let far = vec![Vector3::zeros(), Vector3::new(20_000.0, 0.0, 0.0)];
    let g = build_comm_graph(&far, r_max);
    assert!(g.edges.is_empty());
    assert!(!is_connected(&g));

    let coincident = vec![Vector3::zeros(); 5];
    let g = build_comm_graph(&coincident, r_max);
    assert_eq!(g.edges.len(), 10);
    assert!(is_connected(&g));

    // Single node is trivially connected; two 3-node cliques are not.
    assert!(is_connected(&CommGraph { n: 1, edges: vec![] }));
    assert!(!is_connected(&CommGraph {
        n: 6,
        edges: vec![(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)],
    }));
}

/// Plain union-find used only as an oracle for the BFS reachability.
struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

#[test]
fn connectivity_matches_union_find_oracle() {
    let mut rng = StdRng::seed_from_u64(2024);
    for _ in 0..1000 {
        let n = rng.random_range(1..12);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(0.25) {
                    edges.push((a, b));
                }
            }
        }
        let graph = CommGraph { n, edges: edges.clone() };
        let mut uf = UnionFind::new(n);
        for &(a, b) in &edges {
            uf.union(a, b);
        }
        let root = uf.find(0);
        let oracle = (0..n).all(|v| uf.find(v) == root);
        assert_eq!(is_connected(&graph), oracle, "n={n}, edges={edges:?}");
    }
}

/// A threat-free single-vehicle scenario whose start already matches its
/// target: the optimum is to do nothing.
fn quiescent_scenario() -> forma_uav::Scenario {
    let doc = serde_json::json!({
        "uavs": [{
            "id": "A", "role": "reconnaissance", "position_m": [0.0, 0.0, 100.0],
            "v_min": 0.0, "v_max": 80.0, "dv_max": 5.0,
            "yaw_rate_max_deg": 2.0, "vz_max": 10.0,
            "initial_heading_rad": 0.0, "initial_speed_mps": 0.0
        }],
        "formation": {
            "leader_path": {"origin_m": [0.0, 0.0, 100.0], "velocity_mps": 0.0, "direction": [1.0, 0.0, 0.0]},
            "offsets_m": {"A": [0.0, 0.0, 0.0]},
            "weights": {"A": 1.0},
            "d_min_m": 40.0,
            "r_max_m": 10000.0,
            "control_weight_diag": [1.0, 1.0, 1.0]
        }
    });
    let file: ScenarioFile = serde_json::from_value(doc).unwrap();
    validate_scenario(file).unwrap()
}

#[test]
fn quiescent_scenario_holds_still() {
    let scenario = quiescent_scenario();
    // The default planning tolerance legally tolerates a slow drift; this
    // test checks the optimum itself, so solve tightly.
    let mut cfg = SimConfig {
        duration_s: 10.0,
        ..SimConfig::default()
    };
    cfg.solver.xi = 1e-9;
    cfg.solver.sigma = 0.01;
    cfg.solver.adaptive_tau = true;
    let out = run(&scenario, &cfg).unwrap();
    assert_eq!(out.metrics.failed_steps, 0);
    let mut total_cost = 0.0;
    for rec in &out.trajectory.steps {
        let c = rec.controls[0];
        total_cost += (rec.states[0].position - Vector3::new(0.0, 0.0, 100.0)).norm_squared()
            + c.speed * c.speed
            + c.yaw_rate * c.yaw_rate
            + c.climb_rate * c.climb_rate;
    }
    assert!(total_cost <= 1e-6, "residual activity {total_cost:e}");
}

/// Single vehicle, threat-free, displaced from a moving target: the tracking
/// error decays monotonically once the transient settles.
#[test]
fn tracking_error_decays_after_transient() {
    let doc = serde_json::json!({
        "uavs": [{
            "id": "A", "role": "reconnaissance", "position_m": [300.0, 200.0, 100.0],
            "v_min": 0.0, "v_max": 80.0, "dv_max": 5.0,
            "yaw_rate_max_deg": 6.0, "vz_max": 10.0,
            "initial_heading_rad": 3.141592653589793, "initial_speed_mps": 20.0
        }],
        "formation": {
            "leader_path": {"origin_m": [0.0, 0.0, 100.0], "velocity_mps": 20.0, "direction": [-1.0, 0.0, 0.0]},
            "offsets_m": {"A": [0.0, 0.0, 0.0]},
            "weights": {"A": 1.0},
            "d_min_m": 40.0,
            "r_max_m": 10000.0,
            "control_weight_diag": [0.0001, 2.0, 0.001]
        }
    });
    let file: ScenarioFile = serde_json::from_value(doc).unwrap();
    let scenario = validate_scenario(file).unwrap();
    let cfg = SimConfig {
        duration_s: 60.0,
        ..SimConfig::default()
    };
    let out = run(&scenario, &cfg).unwrap();
    assert_eq!(out.metrics.failed_steps, 0);
    let errors: Vec<f64> = out
        .trajectory
        .steps
        .iter()
        .map(|rec| {
            let target = forma_uav::reference_positions(rec.t_s, &scenario)[0];
            (rec.states[0].position - target).norm()
        })
        .collect();
    // After the heading/speed transient (a 180-degree turn at 6 deg/s) the
    // error shrinks step over step until it reaches a small steady value.
    let transient = 35;
    for w in errors[transient..].windows(2) {
        assert!(
            w[1] <= w[0] + 1e-6 || w[1] < 1.0,
            "tracking error rose: {} -> {}",
            w[0],
            w[1]
        );
    }
    assert!(*errors.last().unwrap() < errors[transient] + 1e-9);
}

#[test]
fn synthetic_exposure_fractions() {
    // Synthetic trajectory: vehicle inside the detection sphere for exactly
    // 20 of 200 steps.
    let doc = serde_json::json!({
        "uavs": [{
            "id": "A", "role": "reconnaissance", "position_m": [0.0, 0.0, 0.0],
            "v_min": 0.0, "v_max": 100.0, "dv_max": 5.0,
            "yaw_rate_max_deg": 2.0, "vz_max": 10.0
        }],
        "radars": [{"position_m": [0.0, 10000.0, 0.0], "detection_radius_m": 5000.0}],
        "formation": {
            "leader_path": {"origin_m": [0.0, 0.0, 0.0], "velocity_mps": 0.0, "direction": [1.0, 0.0, 0.0]},
            "offsets_m": {"A": [0.0, 0.0, 0.0]},
            "weights": {"A": 1.0},
            "d_min_m": 40.0,
            "r_max_m": 10000.0,
            "control_weight_diag": [1.0, 1.0, 1.0]
        }
    });
    let file: ScenarioFile = serde_json::from_value(doc).unwrap();
    let scenario = validate_scenario(file).unwrap();

    let mut trajectory = forma_uav::Trajectory::default();
    for k in 0..200 {
        let inside = k < 20;
        let y = if inside { 8000.0 } else { 0.0 };
        let state = forma_uav::UavState {
            position: Vector3::new(0.0, y, 0.0),
            heading: 0.0,
            speed: 0.0,
        };
        trajectory.steps.push(forma_uav::StepRecord {
            t_s: (k + 1) as f64,
            states: vec![state],
            controls: vec![forma_uav::ControlInput::hold(0.0)],
            status: forma_uav::StepStatus::Converged,
            fallback: false,
            merit: 0.0,
            iterations: 1,
            constraints: forma_uav::sim::ConstraintReport {
                terrain: f64::NEG_INFINITY,
                radar: f64::NEG_INFINITY,
                missile_cone: f64::NEG_INFINITY,
                missile_standoff: f64::NEG_INFINITY,
                collision: f64::NEG_INFINITY,
                connectivity: f64::NEG_INFINITY,
                bounds: f64::NEG_INFINITY,
            },
            min_separation_m: f64::INFINITY,
            comm_connected: true,
            comm_weights: vec![0.0],
            min_lambda: f64::INFINITY,
            min_slack: f64::INFINITY,
            armijo_worst: f64::NEG_INFINITY,
        });
    }
    let metrics = compute_metrics(&trajectory, &scenario);
    assert!((metrics.p_r - 0.1).abs() < 1e-12);
    assert_eq!(metrics.p_m, 0.0);
    assert_eq!(metrics.connectivity_fraction, 1.0);
    assert!(metrics.p_r >= 0.0 && metrics.p_r <= 1.0);
}

#[test]
fn runs_are_bit_deterministic() {
    let scenario = quiescent_scenario();
    let cfg = SimConfig {
        duration_s: 5.0,
        ..SimConfig::default()
    };
    let a = run(&scenario, &cfg).unwrap();
    let b = run(&scenario, &cfg).unwrap();
    for (ra, rb) in a.trajectory.steps.iter().zip(&b.trajectory.steps) {
        assert_eq!(ra.states[0].position, rb.states[0].position);
        assert_eq!(ra.controls[0].speed, rb.controls[0].speed);
        assert_eq!(ra.merit, rb.merit);
    }
}

#[test]
fn trajectory_csv_roundtrips_exactly() {
    let scenario = quiescent_scenario();
    let cfg = SimConfig {
        duration_s: 5.0,
        ..SimConfig::default()
    };
    let out = run(&scenario, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("trajectory.csv");
    write_trajectory_csv(&out.trajectory, &scenario, &csv_path).unwrap();

    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert!(text.starts_with(
        "t,uav_id,x,y,z,psi_rad,v_mps,vz_mps,omega_radps,solver_status,merit\n"
    ));
    assert!(!text.contains('\r'), "LF line endings required");

    let rows = read_trajectory_csv(&csv_path).unwrap();
    assert_eq!(rows.len(), out.trajectory.steps.len());
    for (row, rec) in rows.iter().zip(&out.trajectory.steps) {
        assert_eq!(row.t_s, rec.t_s);
        assert_eq!(row.state.position, rec.states[0].position);
        assert_eq!(row.state.heading, rec.states[0].heading);
        assert_eq!(row.state.speed, rec.states[0].speed);
        assert_eq!(row.merit, rec.merit);
    }

    let rebuilt = trajectory_from_rows(&rows, &scenario);
    let m1 = compute_metrics(&rebuilt, &scenario);
    let m2 = compute_metrics(&out.trajectory, &scenario);
    assert_eq!(m1.p_r, m2.p_r);
    assert_eq!(m1.total_steps, m2.total_steps);

    let metrics_path = dir.path().join("metrics.json");
    write_metrics_json(&m2, &metrics_path).unwrap();
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&metrics_path).unwrap()).unwrap();
    for key in [
        "p_r",
        "p_m",
        "min_separation_m",
        "connectivity_fraction",
        "failed_steps",
        "total_steps",
    ] {
        assert!(doc.get(key).is_some(), "metrics.json missing {key}");
    }
    assert_eq!(doc.as_object().unwrap().len(), 6);
}

#[test]
fn metrics_bounds_hold_on_degenerate_runs() {
    let scenario = quiescent_scenario();
    let cfg = SimConfig {
        duration_s: 1.0,
        ..SimConfig::default()
    };
    let out = run(&scenario, &cfg).unwrap();
    let m = &out.metrics;
    assert!(m.p_r >= 0.0 && m.p_r <= 1.0);
    assert!(m.p_m >= 0.0 && m.p_m <= 1.0);
    assert!(m.connectivity_fraction >= 0.0 && m.connectivity_fraction <= 1.0);
    assert_eq!(m.total_steps, 1);
}

#[test]
fn duration_must_be_integral_multiple_of_dt() {
    let cfg = SimConfig {
        duration_s: 10.5,
        dt_s: 1.0,
        ..SimConfig::default()
    };
    assert!(cfg.steps().is_err());
    let cfg = SimConfig {
        duration_s: 200.0,
        dt_s: 0.5,
        ..SimConfig::default()
    };
    assert_eq!(cfg.steps().unwrap(), 400);
}
