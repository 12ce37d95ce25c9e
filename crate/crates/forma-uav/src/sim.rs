//! Receding-horizon closed loop, communication graph, and exposure metrics.

use crate::horizon::{build_nlp, HorizonOptions};
use crate::model::{
    comm_weight, g_collision, g_connectivity, g_missile, g_radar, g_terrain, step_dynamics,
    ControlInput, ModelError, UavState,
};
use crate::scenario::Scenario;
use forma_core::{solve, IterateV, SolverConfig, SolverStatus};
use log::{debug, info, warn};
use nalgebra::Vector3;
use ndarray::Array1;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("solver setup failed: {0}")]
    Solver(#[from] forma_core::IpmError),
}

/// Closed-loop run parameters.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub duration_s: f64,
    pub dt_s: f64,
    pub horizon: usize,
    pub solver: SolverConfig<f64>,
    pub horizon_options: HorizonOptions,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            duration_s: 200.0,
            dt_s: 1.0,
            horizon: 10,
            solver: SolverConfig {
                regularity_diagnostics: false,
                ..SolverConfig::default()
            },
            horizon_options: HorizonOptions {
                // 5 mm of constraint tightening keeps applied steps
                // strictly feasible despite the finite solve tolerance.
                row_margin: 5e-6,
                ..HorizonOptions::default()
            },
        }
    }
}

impl SimConfig {
    pub fn steps(&self) -> Result<usize, SimError> {
        if self.dt_s <= 0.0 || self.duration_s <= 0.0 {
            return Err(SimError::Config("duration and dt must be positive".into()));
        }
        let steps = self.duration_s / self.dt_s;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(SimError::Config(
                "duration must be an integral multiple of dt".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(SimError::Config("horizon must be at least 1".into()));
        }
        Ok(steps.round() as usize)
    }
}

/// How one planning step was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Converged,
    MaxIters,
    LineSearchFailure,
    RegularizationFailure,
}

impl StepStatus {
    pub fn is_failure(self) -> bool {
        self != StepStatus::Converged
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StepStatus::Converged => "converged",
            StepStatus::MaxIters => "max_iters",
            StepStatus::LineSearchFailure => "line_search_failure",
            StepStatus::RegularizationFailure => "regularization_failure",
        }
    }
}

impl From<SolverStatus> for StepStatus {
    fn from(s: SolverStatus) -> Self {
        match s {
            SolverStatus::Converged => StepStatus::Converged,
            SolverStatus::MaxIters => StepStatus::MaxIters,
            SolverStatus::LineSearchFailure => StepStatus::LineSearchFailure,
            SolverStatus::RegularizationFailure => StepStatus::RegularizationFailure,
        }
    }
}

/// Worst physical constraint value per family at one applied step
/// (negative means satisfied with margin; `-inf` when the family is empty).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConstraintReport {
    pub terrain: f64,
    pub radar: f64,
    pub missile_cone: f64,
    pub missile_standoff: f64,
    pub collision: f64,
    pub connectivity: f64,
    pub bounds: f64,
}

impl ConstraintReport {
    pub fn max_all(&self) -> f64 {
        [
            self.terrain,
            self.radar,
            self.missile_cone,
            self.missile_standoff,
            self.collision,
            self.connectivity,
            self.bounds,
        ]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One applied simulation step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// Mission time of the state below (seconds after start).
    pub t_s: f64,
    pub states: Vec<UavState>,
    pub controls: Vec<ControlInput>,
    pub status: StepStatus,
    /// Whether the fallback (hold previous control) was applied.
    pub fallback: bool,
    pub merit: f64,
    pub iterations: usize,
    pub constraints: ConstraintReport,
    pub min_separation_m: f64,
    pub comm_connected: bool,
    pub comm_weights: Vec<f64>,
    /// Positivity margin over the solve's accepted iterates.
    pub min_lambda: f64,
    pub min_slack: f64,
    /// Worst Armijo violation over the solve (nonpositive means clean).
    pub armijo_worst: f64,
}

/// Full closed-loop log.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
}

/// Aggregate exposure and connectivity metrics.
#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub p_r: f64,
    pub p_m: f64,
    pub min_separation_m: f64,
    pub connectivity_fraction: f64,
    pub failed_steps: usize,
    pub total_steps: usize,
    /// Per-step, per-vehicle communication-weight diagnostics.
    #[serde(skip)]
    pub comm_weights: Vec<Vec<f64>>,
}

/// Undirected communication graph: vehicles are nodes, in-range pairs edges.
#[derive(Debug, Clone)]
pub struct CommGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

/// Edges are exactly the unordered pairs within `r_max`.
pub fn build_comm_graph(positions: &[Vector3<f64>], r_max: f64) -> CommGraph {
    let n = positions.len();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if (positions[a] - positions[b]).norm() <= r_max {
                edges.push((a, b));
            }
        }
    }
    CommGraph { n, edges }
}

/// Breadth-first reachability: true iff every node pair is connected.
pub fn is_connected(graph: &CommGraph) -> bool {
    if graph.n == 0 {
        return false;
    }
    let mut adj = vec![Vec::new(); graph.n];
    for &(a, b) in &graph.edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; graph.n];
    let mut queue = std::collections::VecDeque::new();
    seen[0] = true;
    queue.push_back(0);
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    count == graph.n
}

/// Evaluates every constraint family at physical scale for the given states
/// and applied controls.
pub fn evaluate_constraints(
    scenario: &Scenario,
    states: &[UavState],
    controls: &[ControlInput],
    prev_speeds: &[f64],
) -> ConstraintReport {
    let sense = scenario.cone_sense;
    let mut rep = ConstraintReport {
        terrain: f64::NEG_INFINITY,
        radar: f64::NEG_INFINITY,
        missile_cone: f64::NEG_INFINITY,
        missile_standoff: f64::NEG_INFINITY,
        collision: f64::NEG_INFINITY,
        connectivity: f64::NEG_INFINITY,
        bounds: f64::NEG_INFINITY,
    };
    let n = states.len();
    for (i, s) in states.iter().enumerate() {
        for m in &scenario.threats.mountains {
            rep.terrain = rep.terrain.max(g_terrain(s, m));
        }
        for r in &scenario.threats.radars {
            rep.radar = rep.radar.max(g_radar(&s.position, r));
        }
        for (f, missile) in scenario.threats.missiles.iter().enumerate() {
            let jammer = scenario.threats.missile_jammers[f];
            if jammer == i {
                continue;
            }
            if let Ok((cone, standoff)) =
                g_missile(&s.position, missile, &states[jammer].position)
            {
                rep.missile_cone = rep.missile_cone.max(sense.sign() * cone);
                // `standoff` is already the <= 0-satisfied value (jammer
                // range minus vehicle range).
                rep.missile_standoff = rep.missile_standoff.max(standoff);
            }
        }
        let b = scenario.uavs[i].bounds;
        let c = controls[i];
        rep.bounds = rep
            .bounds
            .max(c.speed - b.v_max)
            .max(b.v_min - c.speed)
            .max(c.yaw_rate.abs() - b.yaw_rate_max)
            .max(c.climb_rate.abs() - b.vz_max)
            .max((c.speed - prev_speeds[i]).abs() - b.dv_max);
    }
    for a in 0..n {
        for b in a + 1..n {
            rep.collision = rep.collision.max(g_collision(
                &states[a].position,
                &states[b].position,
                scenario.formation.d_min,
            ));
        }
    }
    for &(a, b) in &scenario.topology {
        rep.connectivity = rep.connectivity.max(g_connectivity(
            &states[a].position,
            &states[b].position,
            scenario.formation.r_max,
        ));
    }
    rep
}

fn min_separation(states: &[UavState]) -> f64 {
    let mut best = f64::INFINITY;
    for a in 0..states.len() {
        for b in a + 1..states.len() {
            best = best.min((states[a].position - states[b].position).norm());
        }
    }
    best
}

/// Outcome of a closed-loop run.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub trajectory: Trajectory,
    pub metrics: Metrics,
    /// Set when more than 10% of the planning solves failed.
    pub flagged_failed: bool,
}

/// Runs the receding-horizon loop: at every step, transcribe the horizon
/// from the current states, warm-start from the shifted previous solution,
/// solve, apply the first control, and advance the dynamics. A failed solve
/// is recorded and the previous control is held for that step; the run is
/// flagged failed when more than 10% of steps fall back.
pub fn run(scenario: &Scenario, config: &SimConfig) -> Result<SimOutcome, SimError> {
    let total_steps = config.steps()?;
    let n = scenario.n_uavs();
    let mut states = scenario.initial_states();
    let mut prev_controls: Vec<ControlInput> = scenario
        .uavs
        .iter()
        .map(|u| ControlInput::hold(u.initial_speed))
        .collect();
    let mut prev_solution: Option<Array1<f64>> = None;
    let mut trajectory = Trajectory::default();
    let mut failed_steps = 0;

    for step in 0..total_steps {
        let t0 = step as f64 * config.dt_s;
        let nlp = build_nlp(
            scenario,
            &states,
            t0,
            config.horizon,
            config.dt_s,
            &config.horizon_options,
        )?;
        let guess = match &prev_solution {
            Some(prev) => nlp.shift_guess(prev.view()),
            None => nlp.rollout_guess(&prev_controls),
        };
        let v0 = IterateV::from_primal(&nlp, guess);
        let result = solve(&nlp, v0, &config.solver)?;
        let status = StepStatus::from(result.status);

        let (controls, fallback) = if status.is_failure() {
            failed_steps += 1;
            debug!(
                "step {step}: solver {} after {} iterations; holding previous control",
                status.as_str(),
                result.iterations
            );
            (prev_controls.clone(), true)
        } else {
            (nlp.first_controls(result.final_iterate.u.view()), false)
        };

        let prev_speeds: Vec<f64> = states.iter().map(|s| s.speed).collect();
        for i in 0..n {
            states[i] = step_dynamics(&states[i], &controls[i], config.dt_s);
        }

        let constraints = evaluate_constraints(scenario, &states, &controls, &prev_speeds);
        let positions: Vec<Vector3<f64>> = states.iter().map(|s| s.position).collect();
        let graph = build_comm_graph(&positions, scenario.formation.r_max);
        let connected = is_connected(&graph);
        let weights: Vec<f64> = (0..n)
            .map(|i| {
                let neighbors: Vec<Vector3<f64>> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| positions[j])
                    .collect();
                comm_weight(&positions[i], &neighbors, scenario.formation.d_min)
            })
            .collect();

        let (min_lambda, min_slack) = result
            .positivity_history
            .iter()
            .fold((f64::INFINITY, f64::INFINITY), |(al, asl), &(l, s)| {
                (al.min(l), asl.min(s))
            });
        let armijo_worst = result
            .armijo_history
            .iter()
            .map(|a| a.phi_after - (a.phi_before + 1e-4 * a.alpha_p * a.dir_derivative))
            .fold(f64::NEG_INFINITY, f64::max);

        trajectory.steps.push(StepRecord {
            t_s: t0 + config.dt_s,
            states: states.clone(),
            controls: controls.clone(),
            status,
            fallback,
            merit: result
                .residual_history
                .last()
                .map(|&(m, _)| m)
                .unwrap_or(0.0),
            iterations: result.iterations,
            constraints,
            min_separation_m: min_separation(&states),
            comm_connected: connected,
            comm_weights: weights,
            min_lambda,
            min_slack,
            armijo_worst,
        });

        prev_solution = if status.is_failure() {
            None
        } else {
            Some(result.final_iterate.u)
        };
        prev_controls = controls;
    }

    let metrics = compute_metrics(&trajectory, scenario);
    let flagged_failed = failed_steps * 10 > total_steps;
    if flagged_failed {
        warn!(
            "run flagged failed: {failed_steps}/{total_steps} planning solves fell back"
        );
    } else {
        info!(
            "run complete: {failed_steps}/{total_steps} fallback steps, p_r={:.3}, p_m={:.3}",
            metrics.p_r, metrics.p_m
        );
    }
    Ok(SimOutcome {
        trajectory,
        metrics,
        flagged_failed,
    })
}

/// Exposure, separation, and connectivity metrics over a trajectory.
///
/// Exposure counts a step when any vehicle violates the radar constraint
/// (`p_r`) or the missile cone/standoff pair (`p_m`) at the applied state.
pub fn compute_metrics(trajectory: &Trajectory, scenario: &Scenario) -> Metrics {
    let total = trajectory.steps.len();
    let mut radar_steps = 0;
    let mut missile_steps = 0;
    let mut connected_steps = 0;
    let mut min_sep = f64::INFINITY;
    let mut failed = 0;
    let mut comm_weights = Vec::with_capacity(total);
    for rec in &trajectory.steps {
        // Recompute exposure from the logged states so the metric is
        // independent of what the planner believed.
        let mut radar_violated = false;
        for s in &rec.states {
            for r in &scenario.threats.radars {
                if g_radar(&s.position, r) > 0.0 {
                    radar_violated = true;
                }
            }
        }
        let mut missile_violated = false;
        for (i, s) in rec.states.iter().enumerate() {
            for (f, missile) in scenario.threats.missiles.iter().enumerate() {
                let jammer = scenario.threats.missile_jammers[f];
                if jammer == i {
                    continue;
                }
                if let Ok((cone, standoff)) =
                    g_missile(&s.position, missile, &rec.states[jammer].position)
                {
                    if scenario.cone_sense.sign() * cone > 0.0 || standoff > 0.0 {
                        missile_violated = true;
                    }
                }
            }
        }
        radar_steps += radar_violated as usize;
        missile_steps += missile_violated as usize;
        connected_steps += rec.comm_connected as usize;
        min_sep = min_sep.min(rec.min_separation_m);
        failed += rec.fallback as usize;
        comm_weights.push(rec.comm_weights.clone());
    }
    let denom = total.max(1) as f64;
    Metrics {
        p_r: radar_steps as f64 / denom,
        p_m: missile_steps as f64 / denom,
        min_separation_m: min_sep,
        connectivity_fraction: connected_steps as f64 / denom,
        failed_steps: failed,
        total_steps: total,
        comm_weights,
    }
}

/// Solves one full-horizon problem (no receding loop) and returns the
/// planned open-loop trajectory; intended for small horizons.
pub fn run_single_shot(
    scenario: &Scenario,
    k: usize,
    dt: f64,
    solver: &SolverConfig<f64>,
    opts: &HorizonOptions,
) -> Result<(Trajectory, StepStatus), SimError> {
    let states = scenario.initial_states();
    let nlp = build_nlp(scenario, &states, 0.0, k, dt, opts)?;
    let hold: Vec<ControlInput> = scenario
        .uavs
        .iter()
        .map(|u| ControlInput::hold(u.initial_speed))
        .collect();
    let guess = nlp.rollout_guess(&hold);
    let v0 = IterateV::from_primal(&nlp, guess);
    let result = solve(&nlp, v0, solver)?;
    let status = StepStatus::from(result.status);

    let mut trajectory = Trajectory::default();
    let u = result.final_iterate.u.view();
    let mut prev_speeds: Vec<f64> = states.iter().map(|s| s.speed).collect();
    for t in 1..=k {
        let states_t: Vec<UavState> = (0..scenario.n_uavs())
            .map(|i| {
                let mut s = nlp.state_at(u, t, i);
                s.heading = crate::model::normalize_angle(s.heading);
                s
            })
            .collect();
        let controls_t: Vec<ControlInput> = (0..scenario.n_uavs())
            .map(|i| nlp.control_at(u, t - 1, i))
            .collect();
        let constraints = evaluate_constraints(scenario, &states_t, &controls_t, &prev_speeds);
        let positions: Vec<Vector3<f64>> = states_t.iter().map(|s| s.position).collect();
        let graph = build_comm_graph(&positions, scenario.formation.r_max);
        trajectory.steps.push(StepRecord {
            t_s: t as f64 * dt,
            min_separation_m: min_separation(&states_t),
            comm_connected: is_connected(&graph),
            comm_weights: Vec::new(),
            states: states_t.clone(),
            controls: controls_t.clone(),
            status,
            fallback: false,
            merit: 0.0,
            iterations: result.iterations,
            constraints,
            min_lambda: f64::INFINITY,
            min_slack: f64::INFINITY,
            armijo_worst: f64::NEG_INFINITY,
        });
        prev_speeds = controls_t.iter().map(|c| c.speed).collect();
    }
    Ok((trajectory, status))
}
