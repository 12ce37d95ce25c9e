//! Trajectory CSV and metrics JSON artifacts.
//!
//! The CSV carries one row per vehicle per applied step with the header
//! `t,uav_id,x,y,z,psi_rad,v_mps,vz_mps,omega_radps,solver_status,merit`,
//! LF line endings, and shortest-roundtrip decimal formatting so parsing a
//! file back reproduces the logged values exactly.

use crate::model::{ControlInput, UavState};
use crate::scenario::Scenario;
use crate::sim::{Metrics, StepStatus, Trajectory};
use nalgebra::Vector3;
use serde::Serialize;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("trajectory csv malformed at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub const TRAJECTORY_HEADER: &str =
    "t,uav_id,x,y,z,psi_rad,v_mps,vz_mps,omega_radps,solver_status,merit";

/// Writes the trajectory CSV for a run.
pub fn write_trajectory_csv(
    trajectory: &Trajectory,
    scenario: &Scenario,
    path: &Path,
) -> Result<(), OutputError> {
    let mut out = String::new();
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for rec in &trajectory.steps {
        for (i, (s, c)) in rec.states.iter().zip(&rec.controls).enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                rec.t_s,
                scenario.uavs[i].id,
                s.position.x,
                s.position.y,
                s.position.z,
                s.heading,
                s.speed,
                c.climb_rate,
                c.yaw_rate,
                rec.status.as_str(),
                rec.merit,
            ));
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Rows parsed back from a trajectory CSV.
#[derive(Debug, Clone)]
pub struct TrajectoryRow {
    pub t_s: f64,
    pub uav_id: String,
    pub state: UavState,
    pub control: ControlInput,
    pub solver_status: String,
    pub merit: f64,
}

/// Parses a trajectory CSV produced by [`write_trajectory_csv`].
pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryRow>, OutputError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == TRAJECTORY_HEADER => {}
        Some((_, header)) => {
            return Err(OutputError::Malformed {
                line: 1,
                message: format!("unexpected header {header:?}"),
            })
        }
        None => {
            return Err(OutputError::Malformed {
                line: 1,
                message: "empty file".to_string(),
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 11 {
            return Err(OutputError::Malformed {
                line: idx + 1,
                message: format!("expected 11 fields, got {}", parts.len()),
            });
        }
        let num = |k: usize| -> Result<f64, OutputError> {
            parts[k].parse::<f64>().map_err(|e| OutputError::Malformed {
                line: idx + 1,
                message: format!("field {k}: {e}"),
            })
        };
        rows.push(TrajectoryRow {
            t_s: num(0)?,
            uav_id: parts[1].to_string(),
            state: UavState {
                position: Vector3::new(num(2)?, num(3)?, num(4)?),
                heading: num(5)?,
                speed: num(6)?,
            },
            control: ControlInput {
                speed: num(6)?,
                climb_rate: num(7)?,
                yaw_rate: num(8)?,
            },
            solver_status: parts[9].to_string(),
            merit: num(10)?,
        });
    }
    Ok(rows)
}

/// Rebuilds a [`Trajectory`] (states, status, and connectivity) from parsed
/// CSV rows, grouping by vehicle count in file order.
pub fn trajectory_from_rows(rows: &[TrajectoryRow], scenario: &Scenario) -> Trajectory {
    let n_uavs = scenario.n_uavs();
    let mut trajectory = Trajectory::default();
    for chunk in rows.chunks(n_uavs) {
        if chunk.len() < n_uavs {
            break;
        }
        let states: Vec<UavState> = chunk.iter().map(|r| r.state).collect();
        let controls: Vec<ControlInput> = chunk.iter().map(|r| r.control).collect();
        let positions: Vec<Vector3<f64>> = states.iter().map(|s| s.position).collect();
        let graph = crate::sim::build_comm_graph(&positions, scenario.formation.r_max);
        let connected = crate::sim::is_connected(&graph);
        let weights: Vec<f64> = (0..n_uavs)
            .map(|i| {
                let neighbors: Vec<Vector3<f64>> = (0..n_uavs)
                    .filter(|&j| j != i)
                    .map(|j| positions[j])
                    .collect();
                crate::model::comm_weight(&positions[i], &neighbors, scenario.formation.d_min)
            })
            .collect();
        let fallback = chunk[0].solver_status != StepStatus::Converged.as_str();
        trajectory.steps.push(crate::sim::StepRecord {
            t_s: chunk[0].t_s,
            min_separation_m: {
                let mut best = f64::INFINITY;
                for a in 0..positions.len() {
                    for b in a + 1..positions.len() {
                        best = best.min((positions[a] - positions[b]).norm());
                    }
                }
                best
            },
            comm_connected: connected,
            comm_weights: weights,
            states,
            controls,
            status: if fallback {
                StepStatus::MaxIters
            } else {
                StepStatus::Converged
            },
            fallback,
            merit: chunk[0].merit,
            iterations: 0,
            constraints: crate::sim::ConstraintReport {
                terrain: f64::NEG_INFINITY,
                radar: f64::NEG_INFINITY,
                missile_cone: f64::NEG_INFINITY,
                missile_standoff: f64::NEG_INFINITY,
                collision: f64::NEG_INFINITY,
                connectivity: f64::NEG_INFINITY,
                bounds: f64::NEG_INFINITY,
            },
            min_lambda: f64::INFINITY,
            min_slack: f64::INFINITY,
            armijo_worst: f64::NEG_INFINITY,
        });
    }
    trajectory
}

#[derive(Serialize)]
struct MetricsJson {
    p_r: f64,
    p_m: f64,
    min_separation_m: f64,
    connectivity_fraction: f64,
    failed_steps: usize,
    total_steps: usize,
}

/// Writes the metrics JSON artifact with its fixed schema.
pub fn write_metrics_json(metrics: &Metrics, path: &Path) -> Result<(), OutputError> {
    let doc = MetricsJson {
        p_r: metrics.p_r,
        p_m: metrics.p_m,
        min_separation_m: metrics.min_separation_m,
        connectivity_fraction: metrics.connectivity_fraction,
        failed_steps: metrics.failed_steps,
        total_steps: metrics.total_steps,
    };
    let mut f = std::fs::File::create(path)?;
    f.write_all(serde_json::to_string_pretty(&doc)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}
