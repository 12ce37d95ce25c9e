//! Scenario documents: JSON schema, validation, and the resolved in-memory
//! form used by the transcription and the simulator.

use crate::model::{ConeSense, Missile, Mountain, Radar, UavRole};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario ({field}): {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

/// One vehicle entry as written in the scenario document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UavFile {
    pub id: String,
    pub role: UavRole,
    pub position_m: [f64; 3],
    pub v_min: f64,
    pub v_max: f64,
    pub dv_max: f64,
    pub yaw_rate_max_deg: f64,
    pub vz_max: f64,
    /// Initial heading; defaults to the leader-path direction.
    #[serde(default)]
    pub initial_heading_rad: Option<f64>,
    /// Initial speed; defaults to the leader speed clamped into bounds.
    #[serde(default)]
    pub initial_speed_mps: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadarFile {
    pub position_m: [f64; 3],
    pub detection_radius_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MissileFile {
    pub position_m: [f64; 3],
    pub aperture_deg: f64,
    pub jammer_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MountainFile {
    /// Footprint polygon vertices (x, y) in meters.
    pub footprint: Vec<[f64; 2]>,
    pub height_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeaderPathFile {
    pub origin_m: [f64; 3],
    pub velocity_mps: f64,
    pub direction: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormationFile {
    pub leader_path: LeaderPathFile,
    /// Displacement from the virtual leader per vehicle id.
    pub offsets_m: HashMap<String, [f64; 3]>,
    /// Scalarization weight per vehicle id; must sum to one.
    pub weights: HashMap<String, f64>,
    pub d_min_m: f64,
    pub r_max_m: f64,
    /// Diagonal of the control weighting matrix (speed, yaw rate, climb).
    pub control_weight_diag: [f64; 3],
}

/// Threat kind referenced by a jammer assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreatKind {
    Radar,
    Missile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssignmentFile {
    pub jammer_id: String,
    pub threat: ThreatKind,
    pub index: usize,
    /// Fraction of the centroid-to-threat segment at which the jammer's
    /// ideal position sits.
    #[serde(default = "default_standoff_fraction")]
    pub standoff_fraction: f64,
    /// Additional displacement of the ideal position, meters.
    #[serde(default)]
    pub lateral_offset_m: [f64; 3],
    /// Drift applied to the lateral offset, m/s; lets a station walk out
    /// gently instead of demanding a ballistic dash.
    #[serde(default)]
    pub lateral_drift_mps: [f64; 3],
    /// Time at which the drift stops accumulating, seconds.
    #[serde(default)]
    pub lateral_drift_until_s: f64,
}

fn default_standoff_fraction() -> f64 {
    0.5
}

/// Top-level scenario document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub uavs: Vec<UavFile>,
    #[serde(default)]
    pub radars: Vec<RadarFile>,
    #[serde(default)]
    pub missiles: Vec<MissileFile>,
    #[serde(default)]
    pub mountains: Vec<MountainFile>,
    pub formation: FormationFile,
    #[serde(default)]
    pub assignments: Vec<AssignmentFile>,
    #[serde(default)]
    pub cone_sense: ConeSense,
    /// Required communication links by vehicle id; defaults to all pairs.
    #[serde(default)]
    pub topology_edges: Option<Vec<[String; 2]>>,
}

/// Per-vehicle bounds used as linear constraint rows.
#[derive(Debug, Clone, Copy)]
pub struct UavBounds {
    pub v_min: f64,
    pub v_max: f64,
    pub dv_max: f64,
    pub yaw_rate_max: f64,
    pub vz_max: f64,
}

/// Resolved vehicle entry (indices instead of ids).
#[derive(Debug, Clone)]
pub struct UavSpec {
    pub id: String,
    pub role: UavRole,
    pub initial_position: Vector3<f64>,
    pub initial_heading: f64,
    pub initial_speed: f64,
    pub bounds: UavBounds,
}

/// Static threat environment.
#[derive(Debug, Clone, Default)]
pub struct ThreatSet {
    pub radars: Vec<Radar>,
    pub missiles: Vec<Missile>,
    /// Jammer vehicle index per missile, aligned with `missiles`.
    pub missile_jammers: Vec<usize>,
    pub mountains: Vec<Mountain>,
}

/// Straight reference path of the virtual leader.
#[derive(Debug, Clone, Copy)]
pub struct LeaderPath {
    pub origin: Vector3<f64>,
    pub speed: f64,
    pub direction: Vector3<f64>,
}

impl LeaderPath {
    pub fn position(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * (self.speed * t)
    }
}

/// Formation geometry, weights, and limits.
#[derive(Debug, Clone)]
pub struct FormationSpec {
    pub leader: LeaderPath,
    /// Displacement from the virtual leader, by vehicle index.
    pub offsets: Vec<Vector3<f64>>,
    /// Scalarization weights by vehicle index; sums to one.
    pub weights: Vec<f64>,
    pub d_min: f64,
    pub r_max: f64,
    pub control_weight_diag: [f64; 3],
}

/// Resolved jammer duty for target generation.
#[derive(Debug, Clone, Copy)]
pub struct Assignment {
    pub jammer: usize,
    pub threat: ThreatKind,
    pub index: usize,
    pub standoff_fraction: f64,
    pub lateral_offset: Vector3<f64>,
    pub lateral_drift: Vector3<f64>,
    pub lateral_drift_until: f64,
}

impl Assignment {
    /// Lateral displacement of the station at mission time `t`.
    pub fn lateral_at(&self, t: f64) -> Vector3<f64> {
        self.lateral_offset + self.lateral_drift * t.clamp(0.0, self.lateral_drift_until)
    }
}

/// Fully validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub uavs: Vec<UavSpec>,
    pub threats: ThreatSet,
    pub formation: FormationSpec,
    pub assignments: Vec<Assignment>,
    pub cone_sense: ConeSense,
    /// Required communication links by vehicle index.
    pub topology: Vec<(usize, usize)>,
}

impl Scenario {
    pub fn n_uavs(&self) -> usize {
        self.uavs.len()
    }

    pub fn initial_states(&self) -> Vec<crate::model::UavState> {
        self.uavs
            .iter()
            .map(|u| crate::model::UavState {
                position: u.initial_position,
                heading: u.initial_heading,
                speed: u.initial_speed,
            })
            .collect()
    }
}

/// Loads and validates a scenario document from disk.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    let file: ScenarioFile = serde_json::from_str(&text)?;
    validate_scenario(file)
}

/// Validates a parsed scenario document and resolves ids to indices.
pub fn validate_scenario(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
    if file.uavs.is_empty() {
        return Err(invalid("uavs", "at least one vehicle is required"));
    }
    let mut index_of: HashMap<String, usize> = HashMap::new();
    for (i, u) in file.uavs.iter().enumerate() {
        if index_of.insert(u.id.clone(), i).is_some() {
            return Err(invalid("uavs.id", format!("duplicate id {}", u.id)));
        }
        if !(u.v_min >= 0.0 && u.v_min <= u.v_max) {
            return Err(invalid(
                "uavs.v_min",
                format!("{}: need 0 <= v_min <= v_max", u.id),
            ));
        }
        if u.dv_max <= 0.0 || u.yaw_rate_max_deg <= 0.0 || u.vz_max <= 0.0 {
            return Err(invalid(
                "uavs.bounds",
                format!("{}: rate bounds must be positive", u.id),
            ));
        }
    }

    let dir_raw = Vector3::from(file.formation.leader_path.direction);
    if dir_raw.norm() <= 1e-12 {
        return Err(invalid("formation.leader_path.direction", "zero direction"));
    }
    let direction = dir_raw / dir_raw.norm();
    if file.formation.leader_path.velocity_mps < 0.0 {
        return Err(invalid("formation.leader_path.velocity_mps", "negative"));
    }
    let leader = LeaderPath {
        origin: Vector3::from(file.formation.leader_path.origin_m),
        speed: file.formation.leader_path.velocity_mps,
        direction,
    };

    let mut offsets = Vec::with_capacity(file.uavs.len());
    let mut weights = Vec::with_capacity(file.uavs.len());
    for u in &file.uavs {
        let off = file
            .formation
            .offsets_m
            .get(&u.id)
            .ok_or_else(|| invalid("formation.offsets_m", format!("missing {}", u.id)))?;
        offsets.push(Vector3::from(*off));
        let w = file
            .formation
            .weights
            .get(&u.id)
            .ok_or_else(|| invalid("formation.weights", format!("missing {}", u.id)))?;
        if *w < 0.0 {
            return Err(invalid("formation.weights", format!("{} negative", u.id)));
        }
        weights.push(*w);
    }
    let wsum: f64 = weights.iter().sum();
    if (wsum - 1.0).abs() > 1e-9 {
        return Err(invalid(
            "formation.weights",
            format!("weights sum to {wsum}, expected 1"),
        ));
    }
    if file.formation.d_min_m <= 0.0 {
        return Err(invalid("formation.d_min_m", "must be positive"));
    }
    if file.formation.r_max_m <= 0.0 {
        return Err(invalid("formation.r_max_m", "must be positive"));
    }
    if file.formation.control_weight_diag.iter().any(|&m| m <= 0.0) {
        return Err(invalid(
            "formation.control_weight_diag",
            "entries must be positive (positive definite weighting)",
        ));
    }

    let mut radars = Vec::new();
    for (k, r) in file.radars.iter().enumerate() {
        if r.detection_radius_m <= 0.0 {
            return Err(invalid(
                "radars.detection_radius_m",
                format!("radar {k} must have positive radius"),
            ));
        }
        radars.push(Radar {
            position: Vector3::from(r.position_m),
            detection_radius_m: r.detection_radius_m,
        });
    }

    let mut missiles = Vec::new();
    let mut missile_jammers = Vec::new();
    for (k, m) in file.missiles.iter().enumerate() {
        if !(m.aperture_deg > 0.0 && m.aperture_deg < 180.0) {
            return Err(invalid(
                "missiles.aperture_deg",
                format!("missile {k}: aperture must be in (0, 180)"),
            ));
        }
        let j = *index_of.get(&m.jammer_id).ok_or_else(|| {
            invalid(
                "missiles.jammer_id",
                format!("missile {k}: unknown vehicle {}", m.jammer_id),
            )
        })?;
        if file.uavs[j].role != UavRole::MissileInterference {
            return Err(invalid(
                "missiles.jammer_id",
                format!("missile {k}: {} is not a missile-interference vehicle", m.jammer_id),
            ));
        }
        missiles.push(Missile {
            position: Vector3::from(m.position_m),
            aperture: m.aperture_deg.to_radians(),
        });
        missile_jammers.push(j);
    }

    let mut mountains = Vec::new();
    for (k, m) in file.mountains.iter().enumerate() {
        if m.footprint.len() < 3 {
            return Err(invalid(
                "mountains.footprint",
                format!("mountain {k}: need at least 3 vertices"),
            ));
        }
        if m.height_m < 0.0 {
            return Err(invalid(
                "mountains.height_m",
                format!("mountain {k}: negative height"),
            ));
        }
        mountains.push(Mountain {
            footprint: m.footprint.clone(),
            height_m: m.height_m,
        });
    }

    let mut assignments = Vec::new();
    for (k, a) in file.assignments.iter().enumerate() {
        let j = *index_of.get(&a.jammer_id).ok_or_else(|| {
            invalid(
                "assignments.jammer_id",
                format!("assignment {k}: unknown vehicle {}", a.jammer_id),
            )
        })?;
        let (count, wanted_role) = match a.threat {
            ThreatKind::Radar => (radars.len(), UavRole::RadarInterference),
            ThreatKind::Missile => (missiles.len(), UavRole::MissileInterference),
        };
        if a.index >= count {
            return Err(invalid(
                "assignments.index",
                format!("assignment {k}: index {} out of range", a.index),
            ));
        }
        if file.uavs[j].role != wanted_role {
            return Err(invalid(
                "assignments.jammer_id",
                format!("assignment {k}: role of {} does not match threat", a.jammer_id),
            ));
        }
        if !(a.standoff_fraction > 0.0 && a.standoff_fraction < 1.0) {
            return Err(invalid(
                "assignments.standoff_fraction",
                format!("assignment {k}: must be in (0, 1)"),
            ));
        }
        if a.lateral_drift_until_s < 0.0 {
            return Err(invalid(
                "assignments.lateral_drift_until_s",
                format!("assignment {k}: must be nonnegative"),
            ));
        }
        assignments.push(Assignment {
            jammer: j,
            threat: a.threat,
            index: a.index,
            standoff_fraction: a.standoff_fraction,
            lateral_offset: Vector3::from(a.lateral_offset_m),
            lateral_drift: Vector3::from(a.lateral_drift_mps),
            lateral_drift_until: a.lateral_drift_until_s,
        });
    }

    let topology = match &file.topology_edges {
        Some(edges) => {
            let mut out = Vec::new();
            for (k, [a, b]) in edges.iter().enumerate() {
                let ia = *index_of
                    .get(a)
                    .ok_or_else(|| invalid("topology_edges", format!("edge {k}: unknown {a}")))?;
                let ib = *index_of
                    .get(b)
                    .ok_or_else(|| invalid("topology_edges", format!("edge {k}: unknown {b}")))?;
                if ia == ib {
                    return Err(invalid("topology_edges", format!("edge {k}: self loop")));
                }
                out.push((ia.min(ib), ia.max(ib)));
            }
            out.sort_unstable();
            out.dedup();
            out
        }
        None => {
            let n = file.uavs.len();
            let mut out = Vec::new();
            for a in 0..n {
                for b in a + 1..n {
                    out.push((a, b));
                }
            }
            out
        }
    };

    let uavs = file
        .uavs
        .iter()
        .map(|u| {
            let heading = u.initial_heading_rad.unwrap_or_else(|| {
                leader.direction.y.atan2(leader.direction.x)
            });
            let speed = u
                .initial_speed_mps
                .unwrap_or_else(|| leader.speed.clamp(u.v_min, u.v_max));
            UavSpec {
                id: u.id.clone(),
                role: u.role,
                initial_position: Vector3::from(u.position_m),
                initial_heading: crate::model::normalize_angle(heading),
                initial_speed: speed,
                bounds: UavBounds {
                    v_min: u.v_min,
                    v_max: u.v_max,
                    dv_max: u.dv_max,
                    yaw_rate_max: u.yaw_rate_max_deg.to_radians(),
                    vz_max: u.vz_max,
                },
            }
        })
        .collect();

    Ok(Scenario {
        uavs,
        threats: ThreatSet {
            radars,
            missiles,
            missile_jammers,
            mountains,
        },
        formation: FormationSpec {
            leader,
            offsets,
            weights,
            d_min: file.formation.d_min_m,
            r_max: file.formation.r_max_m,
            control_weight_diag: file.formation.control_weight_diag,
        },
        assignments,
        cone_sense: file.cone_sense,
        topology,
    })
}
