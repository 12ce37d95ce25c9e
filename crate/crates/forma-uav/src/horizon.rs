//! Direct transcription of the horizon-K formation problem into a dense
//! nonlinear program.
//!
//! Decision vector layout (N vehicles, K steps):
//!
//! ```text
//! [ state(1, 0..N) .. state(K, 0..N) | control(0, 0..N) .. control(K-1, 0..N) ]
//! state   = (px_km, py_km, pz_km, psi_rad, v_mps)   5 entries
//! control = (v_cmd_mps, yaw_rate_radps, climb_mps)  3 entries
//! ```
//!
//! Positions are scaled to kilometers and the objective by `1/K` to condition
//! the Newton systems; all interfaces outside this module speak meters.

use crate::model::{
    point_in_polygon, step_dynamics_unwrapped, ConeSense, ControlInput, ModelError, UavState,
    TERRAIN_SLACK_MARGIN_M,
};
use crate::formation::reference_positions;
use crate::scenario::{Scenario, UavBounds};
use forma_core::{HessianMode, NlpProblem};
use nalgebra::Vector3;
use ndarray::{Array1, Array2, ArrayView1};

/// Meters per decision-variable position unit.
pub const POS_SCALE_M: f64 = 1000.0;

/// Build-time options for the transcription.
#[derive(Debug, Clone)]
pub struct HorizonOptions {
    /// Emit the missile cone/standoff rows (disabled for the unjammed
    /// comparison runs).
    pub enable_missile_rows: bool,
    pub hessian_mode: HessianMode,
    /// Override the scenario's cone sense.
    pub cone_sense: Option<ConeSense>,
    /// Tightening added to every inequality row (in each row's scaled
    /// units). The closed loop enforces constraints at planned states and
    /// stops at a finite residual, so without a cushion a boundary-riding
    /// row can land a hair on the violating side at the applied state.
    pub row_margin: f64,
}

impl Default for HorizonOptions {
    fn default() -> Self {
        Self {
            enable_missile_rows: true,
            hessian_mode: HessianMode::GaussNewton,
            cone_sense: None,
            row_margin: 0.0,
        }
    }
}

/// Inequality row counts by family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RowCounts {
    pub bounds: usize,
    pub terrain: usize,
    pub radar: usize,
    pub missile_cone: usize,
    pub missile_standoff: usize,
    pub collision: usize,
    pub connectivity: usize,
}

impl RowCounts {
    pub fn total(&self) -> usize {
        self.bounds
            + self.terrain
            + self.radar
            + self.missile_cone
            + self.missile_standoff
            + self.collision
            + self.connectivity
    }
}

/// Families for per-row labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowFamily {
    Bound,
    Terrain,
    Radar,
    MissileCone,
    MissileStandoff,
    Collision,
    Connectivity,
}

enum IneqRow {
    /// `var - limit <= 0`.
    UpperBound { var: usize, limit: f64 },
    /// `limit - var <= 0`.
    LowerBound { var: usize, limit: f64 },
    /// `(var_a - prev) - dv <= 0`, `prev` a variable or fixed initial value.
    RateUpper {
        var: usize,
        prev: Option<usize>,
        prev_const: f64,
        dv: f64,
    },
    /// `(prev - var_a) - dv <= 0`.
    RateLower {
        var: usize,
        prev: Option<usize>,
        prev_const: f64,
        dv: f64,
    },
    /// `h_km - pz + (outside footprint ? -margin : 0) <= 0`.
    Terrain {
        p: [usize; 3],
        mountain: usize,
        h_km: f64,
    },
    /// `scale * (R_km^2 - ||p - c||^2) <= 0`; `scale` normalizes the row to
    /// O(1) at the build-time geometry so finite differences and the KKT
    /// system stay well conditioned for both near and distant sites.
    Radar {
        p: [usize; 3],
        center_km: [f64; 3],
        r2: f64,
        scale: f64,
    },
    /// `sign * (CS - cos(aperture/2)) <= 0` between vehicle and jammer
    /// directions seen from the missile.
    MissileCone {
        p: [usize; 3],
        jam: [usize; 3],
        m_km: [f64; 3],
        cos_half: f64,
        sign: f64,
    },
    /// `||p_jam - m|| - ||p - m|| <= 0`.
    MissileStandoff {
        p: [usize; 3],
        jam: [usize; 3],
        m_km: [f64; 3],
    },
    /// `d_min - ||pa - pb|| <= 0`.
    Collision { pa: [usize; 3], pb: [usize; 3], d_min_km: f64 },
    /// `||pa - pb|| - r_max <= 0`.
    Connectivity { pa: [usize; 3], pb: [usize; 3], r_max_km: f64 },
}

impl IneqRow {
    fn family(&self) -> RowFamily {
        match self {
            IneqRow::UpperBound { .. }
            | IneqRow::LowerBound { .. }
            | IneqRow::RateUpper { .. }
            | IneqRow::RateLower { .. } => RowFamily::Bound,
            IneqRow::Terrain { .. } => RowFamily::Terrain,
            IneqRow::Radar { .. } => RowFamily::Radar,
            IneqRow::MissileCone { .. } => RowFamily::MissileCone,
            IneqRow::MissileStandoff { .. } => RowFamily::MissileStandoff,
            IneqRow::Collision { .. } => RowFamily::Collision,
            IneqRow::Connectivity { .. } => RowFamily::Connectivity,
        }
    }
}

fn vec3(u: ArrayView1<'_, f64>, idx: &[usize; 3]) -> Vector3<f64> {
    Vector3::new(u[idx[0]], u[idx[1]], u[idx[2]])
}

const NORM_FLOOR: f64 = 1e-12;

/// The formation problem over one horizon, as a dense NLP.
pub struct HorizonNlp {
    n_uavs: usize,
    k: usize,
    dt: f64,
    n_vars: usize,
    n_eq: usize,
    /// Initial (fixed) state per vehicle, scaled: (km, km, km, rad, m/s).
    x0: Vec<[f64; 5]>,
    /// Targets in kilometers, indexed `[t-1][i]` for t = 1..=K.
    targets_km: Vec<Vec<Vector3<f64>>>,
    weights: Vec<f64>,
    control_weight: [f64; 3],
    bounds: Vec<UavBounds>,
    rows: Vec<IneqRow>,
    counts: RowCounts,
    hessian_mode: HessianMode,
    row_margin: f64,
    /// Mountain footprints in meters, indexed by the row table.
    mountains: Vec<Vec<[f64; 2]>>,
}

impl HorizonNlp {
    pub fn state_index(&self, t: usize, i: usize, c: usize) -> usize {
        debug_assert!((1..=self.k).contains(&t));
        ((t - 1) * self.n_uavs + i) * 5 + c
    }

    pub fn control_index(&self, t: usize, i: usize, c: usize) -> usize {
        debug_assert!(t < self.k);
        self.k * self.n_uavs * 5 + (t * self.n_uavs + i) * 3 + c
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_uavs(&self) -> usize {
        self.n_uavs
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn counts(&self) -> RowCounts {
        self.counts
    }

    pub fn row_family(&self, row: usize) -> RowFamily {
        self.rows[row].family()
    }

    /// Physical state of vehicle `i` at horizon step `t` (1..=K) read from a
    /// decision vector; the heading is left unwrapped.
    pub fn state_at(&self, u: ArrayView1<'_, f64>, t: usize, i: usize) -> UavState {
        UavState {
            position: Vector3::new(
                u[self.state_index(t, i, 0)] * POS_SCALE_M,
                u[self.state_index(t, i, 1)] * POS_SCALE_M,
                u[self.state_index(t, i, 2)] * POS_SCALE_M,
            ),
            heading: u[self.state_index(t, i, 3)],
            speed: u[self.state_index(t, i, 4)],
        }
    }

    pub fn control_at(&self, u: ArrayView1<'_, f64>, t: usize, i: usize) -> ControlInput {
        ControlInput {
            speed: u[self.control_index(t, i, 0)],
            yaw_rate: u[self.control_index(t, i, 1)],
            climb_rate: u[self.control_index(t, i, 2)],
        }
    }

    pub fn first_controls(&self, u: ArrayView1<'_, f64>) -> Vec<ControlInput> {
        (0..self.n_uavs).map(|i| self.control_at(u, 0, i)).collect()
    }

    fn write_state(&self, u: &mut Array1<f64>, t: usize, i: usize, s: &UavState) {
        u[self.state_index(t, i, 0)] = s.position.x / POS_SCALE_M;
        u[self.state_index(t, i, 1)] = s.position.y / POS_SCALE_M;
        u[self.state_index(t, i, 2)] = s.position.z / POS_SCALE_M;
        u[self.state_index(t, i, 3)] = s.heading;
        u[self.state_index(t, i, 4)] = s.speed;
    }

    fn write_control(&self, u: &mut Array1<f64>, t: usize, i: usize, c: &ControlInput) {
        u[self.control_index(t, i, 0)] = c.speed;
        u[self.control_index(t, i, 1)] = c.yaw_rate;
        u[self.control_index(t, i, 2)] = c.climb_rate;
    }

    fn x0_state(&self, i: usize) -> UavState {
        UavState {
            position: Vector3::new(
                self.x0[i][0] * POS_SCALE_M,
                self.x0[i][1] * POS_SCALE_M,
                self.x0[i][2] * POS_SCALE_M,
            ),
            heading: self.x0[i][3],
            speed: self.x0[i][4],
        }
    }

    /// Initial guess: hold the given controls for the whole horizon and roll
    /// the dynamics forward.
    pub fn rollout_guess(&self, hold: &[ControlInput]) -> Array1<f64> {
        let mut u = Array1::zeros(self.n_vars);
        let mut states: Vec<UavState> = (0..self.n_uavs).map(|i| self.x0_state(i)).collect();
        for t in 0..self.k {
            for i in 0..self.n_uavs {
                self.write_control(&mut u, t, i, &hold[i]);
                states[i] = step_dynamics_unwrapped(&states[i], &hold[i], self.dt);
                let s = states[i];
                self.write_state(&mut u, t + 1, i, &s);
            }
        }
        u
    }

    /// Warm start from the previous horizon's solution: every block shifts
    /// one step earlier and the tail is extended by holding the final
    /// controls.
    pub fn shift_guess(&self, prev: ArrayView1<'_, f64>) -> Array1<f64> {
        assert_eq!(prev.len(), self.n_vars, "layout mismatch in shift_guess");
        let mut u = Array1::zeros(self.n_vars);
        for t in 1..self.k {
            for i in 0..self.n_uavs {
                let s = self.state_at(prev, t + 1, i);
                self.write_state(&mut u, t, i, &s);
            }
        }
        for t in 0..self.k - 1 {
            for i in 0..self.n_uavs {
                let c = self.control_at(prev, t + 1, i);
                self.write_control(&mut u, t, i, &c);
            }
        }
        for i in 0..self.n_uavs {
            let last_c = self.control_at(prev, self.k - 1, i);
            self.write_control(&mut u, self.k - 1, i, &last_c);
            let last_s = self.state_at(prev, self.k, i);
            let extended = step_dynamics_unwrapped(&last_s, &last_c, self.dt);
            self.write_state(&mut u, self.k, i, &extended);
        }
        u
    }

    /// State entries at horizon step `t` as seen by the dynamics row that
    /// produces step `t + 1`; the fixed initial state for `t = 0`.
    fn prev_state(&self, u: ArrayView1<'_, f64>, t: usize, i: usize) -> [f64; 5] {
        if t == 0 {
            self.x0[i]
        } else {
            [
                u[self.state_index(t, i, 0)],
                u[self.state_index(t, i, 1)],
                u[self.state_index(t, i, 2)],
                u[self.state_index(t, i, 3)],
                u[self.state_index(t, i, 4)],
            ]
        }
    }

    fn eval_row(&self, row: &IneqRow, u: ArrayView1<'_, f64>) -> f64 {
        match row {
            IneqRow::UpperBound { var, limit } => u[*var] - limit,
            IneqRow::LowerBound { var, limit } => limit - u[*var],
            IneqRow::RateUpper {
                var,
                prev,
                prev_const,
                dv,
            } => {
                let prev_v = prev.map_or(*prev_const, |p| u[p]);
                u[*var] - prev_v - dv
            }
            IneqRow::RateLower {
                var,
                prev,
                prev_const,
                dv,
            } => {
                let prev_v = prev.map_or(*prev_const, |p| u[p]);
                prev_v - u[*var] - dv
            }
            IneqRow::Terrain { p, mountain, h_km } => {
                let _ = mountain;
                let x_m = u[p[0]] * POS_SCALE_M;
                let y_m = u[p[1]] * POS_SCALE_M;
                let over = point_in_polygon([x_m, y_m], &self.mountain_footprint(*mountain));
                let v = h_km - u[p[2]];
                if over {
                    v
                } else {
                    v - TERRAIN_SLACK_MARGIN_M / POS_SCALE_M
                }
            }
            IneqRow::Radar {
                p,
                center_km,
                r2,
                scale,
            } => {
                let d = vec3(u, p) - Vector3::from(*center_km);
                scale * (r2 - d.norm_squared())
            }
            IneqRow::MissileCone {
                p,
                jam,
                m_km,
                cos_half,
                sign,
            } => {
                let a = vec3(u, p) - Vector3::from(*m_km);
                let b = vec3(u, jam) - Vector3::from(*m_km);
                let na = a.norm().max(NORM_FLOOR);
                let nb = b.norm().max(NORM_FLOOR);
                let cs = a.dot(&b) / (na * nb);
                sign * (cs - cos_half)
            }
            IneqRow::MissileStandoff { p, jam, m_km } => {
                let a = vec3(u, p) - Vector3::from(*m_km);
                let b = vec3(u, jam) - Vector3::from(*m_km);
                b.norm() - a.norm()
            }
            IneqRow::Collision { pa, pb, d_min_km } => {
                d_min_km - (vec3(u, pa) - vec3(u, pb)).norm()
            }
            IneqRow::Connectivity { pa, pb, r_max_km } => {
                (vec3(u, pa) - vec3(u, pb)).norm() - r_max_km
            }
        }
    }

    fn grad_row(&self, row: &IneqRow, u: ArrayView1<'_, f64>, mut out: ndarray::ArrayViewMut1<'_, f64>) {
        match row {
            IneqRow::UpperBound { var, .. } => out[*var] = 1.0,
            IneqRow::LowerBound { var, .. } => out[*var] = -1.0,
            IneqRow::RateUpper { var, prev, .. } => {
                out[*var] = 1.0;
                if let Some(p) = prev {
                    out[*p] = -1.0;
                }
            }
            IneqRow::RateLower { var, prev, .. } => {
                out[*var] = -1.0;
                if let Some(p) = prev {
                    out[*p] = 1.0;
                }
            }
            IneqRow::Terrain { p, .. } => {
                // The footprint gate has zero derivative almost everywhere.
                out[p[2]] = -1.0;
            }
            IneqRow::Radar {
                p, center_km, scale, ..
            } => {
                let d = vec3(u, p) - Vector3::from(*center_km);
                for c in 0..3 {
                    out[p[c]] = -2.0 * scale * d[c];
                }
            }
            IneqRow::MissileCone {
                p,
                jam,
                m_km,
                sign,
                ..
            } => {
                let a = vec3(u, p) - Vector3::from(*m_km);
                let b = vec3(u, jam) - Vector3::from(*m_km);
                let na = a.norm().max(NORM_FLOOR);
                let nb = b.norm().max(NORM_FLOOR);
                let ah = a / na;
                let bh = b / nb;
                let cs = ah.dot(&bh);
                let da = (bh - ah * cs) / na;
                let db = (ah - bh * cs) / nb;
                for c in 0..3 {
                    out[p[c]] = sign * da[c];
                    out[jam[c]] += sign * db[c];
                }
            }
            IneqRow::MissileStandoff { p, jam, m_km } => {
                let a = vec3(u, p) - Vector3::from(*m_km);
                let b = vec3(u, jam) - Vector3::from(*m_km);
                let na = a.norm().max(NORM_FLOOR);
                let nb = b.norm().max(NORM_FLOOR);
                for c in 0..3 {
                    out[p[c]] = -a[c] / na;
                    out[jam[c]] += b[c] / nb;
                }
            }
            IneqRow::Collision { pa, pb, .. } => {
                let d = vec3(u, pa) - vec3(u, pb);
                let n = d.norm().max(NORM_FLOOR);
                for c in 0..3 {
                    out[pa[c]] = -d[c] / n;
                    out[pb[c]] = d[c] / n;
                }
            }
            IneqRow::Connectivity { pa, pb, .. } => {
                let d = vec3(u, pa) - vec3(u, pb);
                let n = d.norm().max(NORM_FLOOR);
                for c in 0..3 {
                    out[pa[c]] = d[c] / n;
                    out[pb[c]] = -d[c] / n;
                }
            }
        }
    }

    /// Adds `coef * hess(row)` to `h` for the curvature-carrying rows; used
    /// by the exact Hessian mode. Cone-row curvature is intentionally left
    /// out (Gauss-Newton treatment for that family in either mode).
    fn add_row_curvature(
        &self,
        row: &IneqRow,
        u: ArrayView1<'_, f64>,
        coef: f64,
        h: &mut Array2<f64>,
    ) {
        let mut add_norm_curvature = |idx_a: &[usize; 3], idx_b: Option<&[usize; 3]>, d: Vector3<f64>, sign: f64| {
            // Curvature of sign * ||d||: sign * (I - n n^T) / ||d||, mapped
            // onto the variable blocks of d = x_a - x_b.
            let n = d.norm().max(NORM_FLOOR);
            let nh = d / n;
            for r in 0..3 {
                for c in 0..3 {
                    let val = sign * (((r == c) as u8 as f64) - nh[r] * nh[c]) / n * coef;
                    h[(idx_a[r], idx_a[c])] += val;
                    if let Some(idx_b) = idx_b {
                        h[(idx_b[r], idx_b[c])] += val;
                        h[(idx_a[r], idx_b[c])] -= val;
                        h[(idx_b[r], idx_a[c])] -= val;
                    }
                }
            }
        };
        match row {
            IneqRow::Radar { p, scale, .. } => {
                for c in 0..3 {
                    h[(p[c], p[c])] += -2.0 * scale * coef;
                }
            }
            IneqRow::Collision { pa, pb, .. } => {
                let d = vec3(u, pa) - vec3(u, pb);
                add_norm_curvature(pa, Some(pb), d, -1.0);
            }
            IneqRow::Connectivity { pa, pb, .. } => {
                let d = vec3(u, pa) - vec3(u, pb);
                add_norm_curvature(pa, Some(pb), d, 1.0);
            }
            IneqRow::MissileStandoff { p, jam, m_km } => {
                let a = vec3(u, p) - Vector3::from(*m_km);
                let b = vec3(u, jam) - Vector3::from(*m_km);
                add_norm_curvature(p, None, a, -1.0);
                add_norm_curvature(jam, None, b, 1.0);
            }
            _ => {}
        }
    }

    fn mountain_footprint(&self, idx: usize) -> &[[f64; 2]] {
        &self.mountains[idx]
    }
}

impl NlpProblem<f64> for HorizonNlp {
    fn n_vars(&self) -> usize {
        self.n_vars
    }

    fn n_eq(&self) -> usize {
        self.n_eq
    }

    fn n_ineq(&self) -> usize {
        self.rows.len()
    }

    fn objective(&self, u: ArrayView1<'_, f64>) -> f64 {
        let inv_k = 1.0 / self.k as f64;
        let m = &self.control_weight;
        let mut total = 0.0;
        for t in 1..=self.k {
            for i in 0..self.n_uavs {
                let w = self.weights[i];
                let p = Vector3::new(
                    u[self.state_index(t, i, 0)],
                    u[self.state_index(t, i, 1)],
                    u[self.state_index(t, i, 2)],
                );
                total += w * (p - self.targets_km[t - 1][i]).norm_squared();
                let vc = u[self.control_index(t - 1, i, 0)];
                let om = u[self.control_index(t - 1, i, 1)];
                let vz = u[self.control_index(t - 1, i, 2)];
                total += w * (m[0] * vc * vc + m[1] * om * om + m[2] * vz * vz);
            }
        }
        total * inv_k
    }

    fn objective_grad(&self, u: ArrayView1<'_, f64>) -> Array1<f64> {
        let inv_k = 1.0 / self.k as f64;
        let m = &self.control_weight;
        let mut g = Array1::zeros(self.n_vars);
        for t in 1..=self.k {
            for i in 0..self.n_uavs {
                let w2 = 2.0 * self.weights[i] * inv_k;
                for c in 0..3 {
                    let idx = self.state_index(t, i, c);
                    g[idx] = w2 * (u[idx] - self.targets_km[t - 1][i][c]);
                }
                for c in 0..3 {
                    let idx = self.control_index(t - 1, i, c);
                    g[idx] = w2 * m[c] * u[idx];
                }
            }
        }
        g
    }

    fn eq_con(&self, u: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut r = Array1::zeros(self.n_eq);
        let scale = self.dt / POS_SCALE_M;
        for t in 0..self.k {
            for i in 0..self.n_uavs {
                let base = (t * self.n_uavs + i) * 5;
                let prev = self.prev_state(u, t, i);
                let vc = u[self.control_index(t, i, 0)];
                let om = u[self.control_index(t, i, 1)];
                let vz = u[self.control_index(t, i, 2)];
                let (sin_psi, cos_psi) = prev[3].sin_cos();
                let nxt = t + 1;
                r[base] = u[self.state_index(nxt, i, 0)] - prev[0] - vc * cos_psi * scale;
                r[base + 1] = u[self.state_index(nxt, i, 1)] - prev[1] - vc * sin_psi * scale;
                r[base + 2] = u[self.state_index(nxt, i, 2)] - prev[2] - vz * scale;
                r[base + 3] = u[self.state_index(nxt, i, 3)] - prev[3] - om * self.dt;
                r[base + 4] = u[self.state_index(nxt, i, 4)] - vc;
            }
        }
        r
    }

    fn eq_jac(&self, u: ArrayView1<'_, f64>) -> Array2<f64> {
        let mut jac = Array2::zeros((self.n_eq, self.n_vars));
        let scale = self.dt / POS_SCALE_M;
        for t in 0..self.k {
            for i in 0..self.n_uavs {
                let base = (t * self.n_uavs + i) * 5;
                let prev = self.prev_state(u, t, i);
                let vc = u[self.control_index(t, i, 0)];
                let (sin_psi, cos_psi) = prev[3].sin_cos();
                let nxt = t + 1;
                for c in 0..5 {
                    jac[(base + c, self.state_index(nxt, i, c))] = 1.0;
                }
                if t >= 1 {
                    jac[(base, self.state_index(t, i, 0))] = -1.0;
                    jac[(base, self.state_index(t, i, 3))] = vc * sin_psi * scale;
                    jac[(base + 1, self.state_index(t, i, 1))] = -1.0;
                    jac[(base + 1, self.state_index(t, i, 3))] = -vc * cos_psi * scale;
                    jac[(base + 2, self.state_index(t, i, 2))] = -1.0;
                    jac[(base + 3, self.state_index(t, i, 3))] = -1.0;
                }
                jac[(base, self.control_index(t, i, 0))] = -cos_psi * scale;
                jac[(base + 1, self.control_index(t, i, 0))] = -sin_psi * scale;
                jac[(base + 2, self.control_index(t, i, 2))] = -scale;
                jac[(base + 3, self.control_index(t, i, 1))] = -self.dt;
                jac[(base + 4, self.state_index(nxt, i, 4))] = 1.0;
                jac[(base + 4, self.control_index(t, i, 0))] = -1.0;
            }
        }
        jac
    }

    fn ineq_con(&self, u: ArrayView1<'_, f64>) -> Array1<f64> {
        Array1::from_iter(
            self.rows
                .iter()
                .map(|row| self.eval_row(row, u) + self.row_margin),
        )
    }

    fn ineq_jac(&self, u: ArrayView1<'_, f64>) -> Array2<f64> {
        let mut jac = Array2::zeros((self.rows.len(), self.n_vars));
        for (r, row) in self.rows.iter().enumerate() {
            self.grad_row(row, u, jac.row_mut(r));
        }
        jac
    }

    fn lag_hessian(
        &self,
        u: ArrayView1<'_, f64>,
        lambda: ArrayView1<'_, f64>,
        w: ArrayView1<'_, f64>,
    ) -> Array2<f64> {
        let inv_k = 1.0 / self.k as f64;
        let m = &self.control_weight;
        let mut h = Array2::zeros((self.n_vars, self.n_vars));
        // Objective curvature (exact: the objective is quadratic).
        for t in 1..=self.k {
            for i in 0..self.n_uavs {
                let w2 = 2.0 * self.weights[i] * inv_k;
                for c in 0..3 {
                    let idx = self.state_index(t, i, c);
                    h[(idx, idx)] = w2;
                }
                for c in 0..3 {
                    let idx = self.control_index(t - 1, i, c);
                    h[(idx, idx)] = w2 * m[c];
                }
            }
        }
        if self.hessian_mode == HessianMode::Exact {
            // Dynamics-row curvature: the trig terms couple heading and
            // commanded speed.
            let scale = self.dt / POS_SCALE_M;
            for t in 1..self.k {
                for i in 0..self.n_uavs {
                    let base = (t * self.n_uavs + i) * 5;
                    let psi_idx = self.state_index(t, i, 3);
                    let vc_idx = self.control_index(t, i, 0);
                    let psi = u[psi_idx];
                    let vc = u[vc_idx];
                    let (sin_psi, cos_psi) = psi.sin_cos();
                    let w_px = w[base];
                    let w_py = w[base + 1];
                    // r_px = ... - vc cos(psi) dt: d2/dpsi2 = vc cos(psi) dt,
                    // d2/dpsi dvc = sin(psi) dt.
                    h[(psi_idx, psi_idx)] +=
                        w_px * vc * cos_psi * scale + w_py * vc * sin_psi * scale;
                    let cross = w_px * sin_psi * scale - w_py * cos_psi * scale;
                    h[(psi_idx, vc_idx)] += cross;
                    h[(vc_idx, psi_idx)] += cross;
                }
            }
            for (r, row) in self.rows.iter().enumerate() {
                if lambda[r] != 0.0 {
                    self.add_row_curvature(row, u, lambda[r], &mut h);
                }
            }
        }
        h
    }

    fn hessian_mode(&self) -> HessianMode {
        self.hessian_mode
    }
}

/// Builds the horizon-K NLP for the scenario starting from `states` at
/// mission time `t0`.
pub fn build_nlp(
    scenario: &Scenario,
    states: &[UavState],
    t0: f64,
    k: usize,
    dt: f64,
    opts: &HorizonOptions,
) -> Result<HorizonNlp, ModelError> {
    let n = scenario.n_uavs();
    if k == 0 {
        return Err(ModelError::Config("horizon must be at least 1".into()));
    }
    if dt <= 0.0 {
        return Err(ModelError::Config("dt must be positive".into()));
    }
    if states.len() != n {
        return Err(ModelError::LengthMismatch {
            what: "states",
            got: states.len(),
            expected: n,
        });
    }
    for u in &scenario.uavs {
        if u.bounds.v_min > u.bounds.v_max {
            return Err(ModelError::Config(format!(
                "vehicle {}: v_min exceeds v_max",
                u.id
            )));
        }
    }

    let x0: Vec<[f64; 5]> = states
        .iter()
        .map(|s| {
            [
                s.position.x / POS_SCALE_M,
                s.position.y / POS_SCALE_M,
                s.position.z / POS_SCALE_M,
                s.heading,
                s.speed,
            ]
        })
        .collect();

    let targets_km: Vec<Vec<Vector3<f64>>> = (1..=k)
        .map(|t| {
            reference_positions(t0 + t as f64 * dt, scenario)
                .into_iter()
                .map(|p| p / POS_SCALE_M)
                .collect()
        })
        .collect();

    let cone_sense = opts.cone_sense.unwrap_or(scenario.cone_sense);
    let mountains: Vec<Vec<[f64; 2]>> = scenario
        .threats
        .mountains
        .iter()
        .map(|m| m.footprint.clone())
        .collect();

    // Normalize each radar row by its magnitude at the build-time centroid.
    let centroid: Vector3<f64> =
        states.iter().map(|s| s.position).sum::<Vector3<f64>>() / n as f64 / POS_SCALE_M;
    let radar_scales: Vec<f64> = scenario
        .threats
        .radars
        .iter()
        .map(|radar| {
            let c = radar.position / POS_SCALE_M;
            let r_km = radar.detection_radius_m / POS_SCALE_M;
            let magnitude = (r_km * r_km - (centroid - c).norm_squared()).abs();
            1.0 / magnitude.max(1.0)
        })
        .collect();

    let mut shell = HorizonNlp {
        n_uavs: n,
        k,
        dt,
        n_vars: n * k * 8,
        n_eq: n * k * 5,
        x0,
        targets_km,
        weights: scenario.formation.weights.clone(),
        control_weight: scenario.formation.control_weight_diag,
        bounds: scenario.uavs.iter().map(|u| u.bounds).collect(),
        rows: Vec::new(),
        counts: RowCounts::default(),
        hessian_mode: opts.hessian_mode,
        row_margin: opts.row_margin,
        mountains,
    };

    let mut rows = Vec::new();
    let mut counts = RowCounts::default();
    for t in 1..=k {
        for i in 0..n {
            let b = shell.bounds[i];
            let vc = shell.control_index(t - 1, i, 0);
            let om = shell.control_index(t - 1, i, 1);
            let vz = shell.control_index(t - 1, i, 2);
            rows.push(IneqRow::UpperBound { var: vc, limit: b.v_max });
            rows.push(IneqRow::LowerBound { var: vc, limit: b.v_min });
            rows.push(IneqRow::UpperBound { var: om, limit: b.yaw_rate_max });
            rows.push(IneqRow::LowerBound { var: om, limit: -b.yaw_rate_max });
            rows.push(IneqRow::UpperBound { var: vz, limit: b.vz_max });
            rows.push(IneqRow::LowerBound { var: vz, limit: -b.vz_max });
            let (prev, prev_const) = if t == 1 {
                (None, shell.x0[i][4])
            } else {
                (Some(shell.state_index(t - 1, i, 4)), 0.0)
            };
            rows.push(IneqRow::RateUpper { var: vc, prev, prev_const, dv: b.dv_max });
            rows.push(IneqRow::RateLower { var: vc, prev, prev_const, dv: b.dv_max });
            counts.bounds += 8;

            let p = [
                shell.state_index(t, i, 0),
                shell.state_index(t, i, 1),
                shell.state_index(t, i, 2),
            ];
            for (mi, m) in scenario.threats.mountains.iter().enumerate() {
                rows.push(IneqRow::Terrain {
                    p,
                    mountain: mi,
                    h_km: m.height_m / POS_SCALE_M,
                });
                counts.terrain += 1;
            }
            for (ri, radar) in scenario.threats.radars.iter().enumerate() {
                let c = radar.position / POS_SCALE_M;
                let r_km = radar.detection_radius_m / POS_SCALE_M;
                rows.push(IneqRow::Radar {
                    p,
                    center_km: [c.x, c.y, c.z],
                    r2: r_km * r_km,
                    scale: radar_scales[ri],
                });
                counts.radar += 1;
            }
            if opts.enable_missile_rows {
                for (f, missile) in scenario.threats.missiles.iter().enumerate() {
                    let jammer = scenario.threats.missile_jammers[f];
                    if jammer == i {
                        // The jammer's own rows are identically constant
                        // (zero standoff, unit cosine) with zero gradients;
                        // they carry no information and would degenerate the
                        // interior-point system.
                        continue;
                    }
                    let jam = [
                        shell.state_index(t, jammer, 0),
                        shell.state_index(t, jammer, 1),
                        shell.state_index(t, jammer, 2),
                    ];
                    let m_km = missile.position / POS_SCALE_M;
                    rows.push(IneqRow::MissileCone {
                        p,
                        jam,
                        m_km: [m_km.x, m_km.y, m_km.z],
                        cos_half: (missile.aperture / 2.0).cos(),
                        sign: cone_sense.sign(),
                    });
                    rows.push(IneqRow::MissileStandoff {
                        p,
                        jam,
                        m_km: [m_km.x, m_km.y, m_km.z],
                    });
                    counts.missile_cone += 1;
                    counts.missile_standoff += 1;
                }
            }
        }
        for a in 0..n {
            for b2 in a + 1..n {
                rows.push(IneqRow::Collision {
                    pa: [
                        shell.state_index(t, a, 0),
                        shell.state_index(t, a, 1),
                        shell.state_index(t, a, 2),
                    ],
                    pb: [
                        shell.state_index(t, b2, 0),
                        shell.state_index(t, b2, 1),
                        shell.state_index(t, b2, 2),
                    ],
                    d_min_km: scenario.formation.d_min / POS_SCALE_M,
                });
                counts.collision += 1;
            }
        }
        for &(a, b2) in &scenario.topology {
            rows.push(IneqRow::Connectivity {
                pa: [
                    shell.state_index(t, a, 0),
                    shell.state_index(t, a, 1),
                    shell.state_index(t, a, 2),
                ],
                pb: [
                    shell.state_index(t, b2, 0),
                    shell.state_index(t, b2, 1),
                    shell.state_index(t, b2, 2),
                ],
                r_max_km: scenario.formation.r_max / POS_SCALE_M,
            });
            counts.connectivity += 1;
        }
    }

    shell.rows = rows;
    shell.counts = counts;
    Ok(shell)
}
