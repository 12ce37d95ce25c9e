//! Vehicle kinematics, threat/formation constraint functions, and the
//! role-tracking cost pieces.
//!
//! Every constraint function returns a scalar that is satisfied iff <= 0.
//! Positions are in meters, angles in radians, speeds in m/s.

use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("length mismatch: {what} has {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("configuration error: {0}")]
    Config(String),
}

/// Kinematic state of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavState {
    /// Position in meters.
    pub position: Vector3<f64>,
    /// Heading in radians, normalized to (-pi, pi].
    pub heading: f64,
    /// Speed in m/s.
    pub speed: f64,
}

/// Commanded input for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    /// Commanded speed in m/s.
    pub speed: f64,
    /// Yaw rate in rad/s.
    pub yaw_rate: f64,
    /// Climb rate in m/s.
    pub climb_rate: f64,
}

impl ControlInput {
    pub fn hold(speed: f64) -> Self {
        Self {
            speed,
            yaw_rate: 0.0,
            climb_rate: 0.0,
        }
    }
}

/// Mission role of a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UavRole {
    Reconnaissance,
    RadarInterference,
    MissileInterference,
}

/// Normalizes an angle to (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let two_pi = 2.0 * PI;
    let mut r = (a + PI).rem_euclid(two_pi) - PI;
    if r == -PI {
        r = PI;
    }
    r
}

/// Forward-Euler step without heading wrap-around; the transcription uses
/// this form so headings stay smooth across the horizon.
pub fn step_dynamics_unwrapped(state: &UavState, control: &ControlInput, dt: f64) -> UavState {
    let (sin_psi, cos_psi) = state.heading.sin_cos();
    UavState {
        position: Vector3::new(
            state.position.x + control.speed * cos_psi * dt,
            state.position.y + control.speed * sin_psi * dt,
            state.position.z + control.climb_rate * dt,
        ),
        heading: state.heading + control.yaw_rate * dt,
        speed: control.speed,
    }
}

/// Discrete vehicle dynamics: the position advances along the current
/// heading at the commanded speed, the altitude by the climb rate, and the
/// heading by the yaw rate (then normalized). The stored speed becomes the
/// commanded value. Bound enforcement is the optimizer's job, not a runtime
/// guard here.
pub fn step_dynamics(state: &UavState, control: &ControlInput, dt: f64) -> UavState {
    let mut next = step_dynamics_unwrapped(state, control, dt);
    next.heading = normalize_angle(next.heading);
    next
}

/// Polygonal obstacle with a flat top.
#[derive(Debug, Clone)]
pub struct Mountain {
    /// Footprint polygon vertices (x, y) in meters.
    pub footprint: Vec<[f64; 2]>,
    /// Height in meters.
    pub height_m: f64,
}

/// Ray-casting point-in-polygon test on the horizontal plane.
pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (poly[i][0], poly[i][1]);
        let (xj, yj) = (poly[j][0], poly[j][1]);
        if ((yi > p[1]) != (yj > p[1]))
            && (p[0] < (xj - xi) * (p[1] - yi) / (yj - yi) + xi)
        {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Margin added to the terrain constraint outside the footprint so the row
/// stays well inside the feasible side there.
pub const TERRAIN_SLACK_MARGIN_M: f64 = 1.0e4;

/// Terrain clearance: `height - p_z` over the footprint, forced nonbinding
/// (shifted by a large margin) elsewhere. Satisfied iff <= 0.
pub fn g_terrain(state: &UavState, mountain: &Mountain) -> f64 {
    let over = point_in_polygon([state.position.x, state.position.y], &mountain.footprint);
    let v = mountain.height_m - state.position.z;
    if over {
        v
    } else {
        v - TERRAIN_SLACK_MARGIN_M
    }
}

/// Static detection site.
#[derive(Debug, Clone, Copy)]
pub struct Radar {
    pub position: Vector3<f64>,
    pub detection_radius_m: f64,
}

/// Detection-sphere avoidance: `R^2 - ||p - p_r||^2` in square meters;
/// satisfied iff the vehicle is outside the sphere.
pub fn g_radar(position: &Vector3<f64>, radar: &Radar) -> f64 {
    let d2 = (position - radar.position).norm_squared();
    radar.detection_radius_m * radar.detection_radius_m - d2
}

/// Static guided-missile site with a jamming aperture.
#[derive(Debug, Clone, Copy)]
pub struct Missile {
    pub position: Vector3<f64>,
    /// Full aperture angle of the jamming cone, radians.
    pub aperture: f64,
}

/// Which side of the jamming cone the constraint keeps vehicles on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeSense {
    /// `cos(angle to jammer axis) - cos(aperture/2) <= 0`: vehicles must be
    /// angularly separated from the jammer as seen from the missile.
    #[default]
    AsWritten,
    /// The negation: vehicles must stay within the jamming cone.
    Hide,
}

impl ConeSense {
    /// Sign applied to the `as_written` cone value.
    pub fn sign(self) -> f64 {
        match self {
            ConeSense::AsWritten => 1.0,
            ConeSense::Hide => -1.0,
        }
    }
}

/// Missile-avoidance pair for one vehicle: `(cone, standoff)`, both
/// satisfied iff <= 0.
///
/// `cone` is the as-written sense `CS - cos(aperture/2)` where `CS` is the
/// cosine between the vehicle and jammer directions seen from the missile
/// ([`ConeSense`] flips its sign). `standoff` is `||p_o - p_m|| - ||p_i -
/// p_m||`: nonpositive exactly when the vehicle is at least as far from the
/// missile as the jammer screening it.
pub fn g_missile(
    uav_pos: &Vector3<f64>,
    missile: &Missile,
    jammer_pos: &Vector3<f64>,
) -> Result<(f64, f64), ModelError> {
    let a = uav_pos - missile.position;
    let b = jammer_pos - missile.position;
    let na = a.norm();
    let nb = b.norm();
    if na <= 1e-9 || nb <= 1e-9 {
        return Err(ModelError::DegenerateGeometry(
            "vehicle or jammer coincides with the missile position".to_string(),
        ));
    }
    let cs = a.dot(&b) / (na * nb);
    let cone = cs - (missile.aperture / 2.0).cos();
    let standoff = nb - na;
    Ok((cone, standoff))
}

/// Pairwise anti-collision: `d_min - ||p_i - p_j||`, one row per unordered
/// pair; satisfied iff the pair is separated by at least `d_min`.
pub fn g_collision(p_i: &Vector3<f64>, p_j: &Vector3<f64>, d_min: f64) -> f64 {
    d_min - (p_i - p_j).norm()
}

/// Link-length bound for a required communication edge:
/// `||p_i - p_j|| - r_max <= 0`.
pub fn g_connectivity(p_i: &Vector3<f64>, p_j: &Vector3<f64>, r_max: f64) -> f64 {
    (p_i - p_j).norm() - r_max
}

/// Communication-weight diagnostic: `sum_j 1 / ((||p_i - p_j|| - d_min) *
/// ||p_i - p_j||)` over the neighbor set. Diverges to `+inf` as a neighbor
/// approaches `d_min`; reported, never used as a constraint.
pub fn comm_weight(p_i: &Vector3<f64>, neighbors: &[Vector3<f64>], d_min: f64) -> f64 {
    let mut sum = 0.0;
    for pj in neighbors {
        let d = (p_i - pj).norm();
        if d <= d_min {
            return f64::INFINITY;
        }
        sum += 1.0 / ((d - d_min) * d);
    }
    sum
}

/// Tracking-plus-control cost for one vehicle over a horizon:
/// `sum_t (||target(t) - p(t)||^2 + u(t)^T M u(t))` with `M` a positive
/// diagonal weighting. The same formula serves every role; only the target
/// stream differs.
pub fn cost_role(
    trajectory: &[Vector3<f64>],
    controls: &[ControlInput],
    targets: &[Vector3<f64>],
    control_weight_diag: &[f64; 3],
) -> Result<f64, ModelError> {
    if trajectory.len() != targets.len() {
        return Err(ModelError::LengthMismatch {
            what: "targets",
            got: targets.len(),
            expected: trajectory.len(),
        });
    }
    if trajectory.len() != controls.len() {
        return Err(ModelError::LengthMismatch {
            what: "controls",
            got: controls.len(),
            expected: trajectory.len(),
        });
    }
    let m = control_weight_diag;
    let mut total = 0.0;
    for ((p, u), tgt) in trajectory.iter().zip(controls).zip(targets) {
        total += (tgt - p).norm_squared();
        total += m[0] * u.speed * u.speed
            + m[1] * u.yaw_rate * u.yaw_rate
            + m[2] * u.climb_rate * u.climb_rate;
    }
    Ok(total)
}

/// Weighted-sum scalarization of per-vehicle costs. The weights must be
/// nonnegative and sum to one (to 1e-9); the role grouping is immaterial to
/// the sum itself.
pub fn scalarize(costs: &[f64], weights: &[f64]) -> Result<f64, ModelError> {
    if costs.len() != weights.len() {
        return Err(ModelError::LengthMismatch {
            what: "weights",
            got: weights.len(),
            expected: costs.len(),
        });
    }
    if weights.iter().any(|&w| w < 0.0) {
        return Err(ModelError::Config("negative scalarization weight".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(ModelError::Config(format!(
            "scalarization weights sum to {sum}, expected 1"
        )));
    }
    Ok(costs.iter().zip(weights).map(|(c, w)| c * w).sum())
}
