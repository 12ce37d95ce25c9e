//! Multi-vehicle formation reconfiguration on top of the interior-point
//! solver: kinematics and threat constraints, weighted-sum scalarization,
//! direct transcription of the horizon problem, and a receding-horizon
//! simulator with exposure metrics.

pub mod formation;
pub mod horizon;
pub mod model;
pub mod output;
pub mod scenario;
pub mod sim;

pub use formation::{coupled_double_tetrahedron_offsets, reference_positions};
pub use horizon::{build_nlp, HorizonNlp, HorizonOptions, RowCounts, RowFamily, POS_SCALE_M};
pub use model::{
    comm_weight, cost_role, g_collision, g_connectivity, g_missile, g_radar, g_terrain,
    normalize_angle, scalarize, step_dynamics, ConeSense, ControlInput, Missile, ModelError,
    Mountain, Radar, UavRole, UavState,
};
pub use output::{
    read_trajectory_csv, trajectory_from_rows, write_metrics_json, write_trajectory_csv,
    OutputError,
};
pub use scenario::{
    load_scenario, validate_scenario, Scenario, ScenarioError, ScenarioFile, ThreatKind,
};
pub use sim::{
    build_comm_graph, compute_metrics, evaluate_constraints, is_connected, run, run_single_shot,
    CommGraph, Metrics, SimConfig, SimError, SimOutcome, StepRecord, StepStatus, Trajectory,
};
