//! `forma`: run formation missions, solve built-in problems, and verify
//! derivatives from the command line.
//!
//! Exit codes: 0 success; 1 check or convergence failure; 2 validation or
//! input error; 3 run flagged failed (too many fallback steps).

use clap::{Args, Parser, Subcommand, ValueEnum};
use forma_core::{fd_check, solve, IterateV, NlpProblem, SolverConfig, SolverStatus};
use forma_uav::{
    build_nlp, compute_metrics, load_scenario, read_trajectory_csv, run, trajectory_from_rows,
    write_metrics_json, write_trajectory_csv, ConeSense, ControlInput, HorizonOptions, Scenario,
    SimConfig,
};
use ndarray::Array1;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "forma", version, about = "Formation reconfiguration solver and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConeSenseArg {
    AsWritten,
    Hide,
}

impl From<ConeSenseArg> for ConeSense {
    fn from(v: ConeSenseArg) -> Self {
        match v {
            ConeSenseArg::AsWritten => ConeSense::AsWritten,
            ConeSenseArg::Hide => ConeSense::Hide,
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Iteration budget per solve.
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Centering factor in (0, 1).
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// Fraction-to-boundary factor in (0, 1].
    #[arg(long, default_value_t = 0.995)]
    tau: f64,
    /// Convergence threshold on the unperturbed residual infinity norm.
    #[arg(long, default_value_t = 0.01)]
    xi: f64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig<f64> {
        SolverConfig {
            max_iters: self.max_iters,
            sigma: self.sigma,
            tau: self.tau,
            xi: self.xi,
            regularity_diagnostics: false,
            ..SolverConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the receding-horizon closed loop on a scenario.
    Run {
        /// Scenario document (JSON).
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory for trajectory.csv and metrics.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Step length in seconds.
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
        /// Mission duration in seconds.
        #[arg(long, default_value_t = 200.0)]
        duration: f64,
        /// Planning horizon in steps.
        #[arg(long, default_value_t = 10)]
        horizon: usize,
        /// Override the scenario's jamming-cone sense.
        #[arg(long, value_enum)]
        cone_sense: Option<ConeSenseArg>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Solve a built-in problem and print the iteration table.
    Solve {
        /// Problem name; see `--problem help` for the list.
        #[arg(long)]
        problem: String,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Verify the scenario transcription's derivatives by central differences.
    CheckGrad {
        #[arg(long)]
        scenario: PathBuf,
        /// Number of random interior points to check.
        #[arg(long, default_value_t = 10)]
        points: usize,
        /// Planning horizon in steps.
        #[arg(long, default_value_t = 10)]
        horizon: usize,
        /// Step length in seconds.
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
        /// Worst acceptable relative error.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Corrupt one gradient entry (test fixture for the checker itself).
        #[arg(long, hide = true, default_value_t = false)]
        inject_gradient_bug: bool,
    },
    /// Recompute metrics from a trajectory CSV.
    Metrics {
        #[arg(long)]
        scenario: PathBuf,
        /// Trajectory CSV produced by `run`.
        #[arg(long)]
        trajectory: PathBuf,
        /// Optional path for the metrics JSON; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &PathBuf) -> Result<Scenario, ExitCode> {
    load_scenario(path).map_err(|e| {
        eprintln!("error: cannot load scenario {}: {e}", path.display());
        ExitCode::from(2)
    })
}

fn cmd_run(
    scenario_path: PathBuf,
    out_dir: PathBuf,
    dt: f64,
    duration: f64,
    horizon: usize,
    cone_sense: Option<ConeSenseArg>,
    solver: SolverArgs,
) -> ExitCode {
    let scenario = match load(&scenario_path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let config = SimConfig {
        duration_s: duration,
        dt_s: dt,
        horizon,
        solver: solver.config(),
        horizon_options: HorizonOptions {
            cone_sense: cone_sense.map(ConeSense::from),
            ..SimConfig::default().horizon_options
        },
    };
    let outcome = match run(&scenario, &config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("error: cannot create {}: {e}", out_dir.display());
        return ExitCode::from(2);
    }
    let traj_path = out_dir.join("trajectory.csv");
    let metrics_path = out_dir.join("metrics.json");
    if let Err(e) = write_trajectory_csv(&outcome.trajectory, &scenario, &traj_path)
        .and_then(|_| write_metrics_json(&outcome.metrics, &metrics_path))
    {
        eprintln!("error: cannot write outputs: {e}");
        return ExitCode::from(2);
    }
    let m = &outcome.metrics;
    println!(
        "p_r={} p_m={} connectivity={} min_separation_m={} failed={}/{}",
        m.p_r, m.p_m, m.connectivity_fraction, m.min_separation_m, m.failed_steps, m.total_steps
    );
    if outcome.flagged_failed {
        eprintln!("run flagged failed: more than 10% of planning solves fell back");
        return ExitCode::from(3);
    }
    ExitCode::SUCCESS
}

fn cmd_solve(problem: String, solver: SolverArgs) -> ExitCode {
    let oracle = match forma_core::problems::by_name::<f64>(&problem) {
        Some(o) => o,
        None => {
            eprintln!(
                "error: unknown problem {problem:?}; available: {}",
                forma_core::problems::names().join(", ")
            );
            return ExitCode::from(2);
        }
    };
    let v0 = IterateV::from_primal(&oracle.problem, oracle.start.clone());
    let mut config = solver.config();
    config.regularity_diagnostics = true;
    let result = match solve(&oracle.problem, v0, &config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    println!("{:>4} {:>12} {:>12} {:>12} {:>9}", "k", "mu", "merit", "res_inf", "alpha_p");
    for k in 0..result.iterations {
        let (merit, res_inf) = result.residual_history[k];
        println!(
            "{k:>4} {:>12.4e} {:>12.4e} {:>12.4e} {:>9.3e}",
            result.mu_history[k], merit, res_inf, result.step_history[k].alpha_u
        );
    }
    let u = &result.final_iterate.u;
    println!(
        "status: {:?} after {} iterations, residual {:.3e}",
        result.status, result.iterations, result.final_residual_inf
    );
    println!("final point: {:?}", u.as_slice().unwrap_or(&[]));
    if let Some(reg) = &result.diagnostics {
        println!(
            "regularity: licq={} strict_complementarity={} second_order={}",
            reg.licq_rank_ok, reg.strict_complementarity_ok, reg.second_order_flag
        );
    }
    if result.status == SolverStatus::Converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

/// Problem wrapper that corrupts one objective-gradient entry; exercises the
/// checker's failure path from tests.
struct CorruptedGradient<'a> {
    inner: &'a dyn NlpProblem<f64>,
}

impl NlpProblem<f64> for CorruptedGradient<'_> {
    fn n_vars(&self) -> usize {
        self.inner.n_vars()
    }
    fn n_eq(&self) -> usize {
        self.inner.n_eq()
    }
    fn n_ineq(&self) -> usize {
        self.inner.n_ineq()
    }
    fn objective(&self, u: ndarray::ArrayView1<'_, f64>) -> f64 {
        self.inner.objective(u)
    }
    fn objective_grad(&self, u: ndarray::ArrayView1<'_, f64>) -> Array1<f64> {
        let mut g = self.inner.objective_grad(u);
        if !g.is_empty() {
            g[0] *= 2.0;
        }
        g
    }
    fn eq_con(&self, u: ndarray::ArrayView1<'_, f64>) -> Array1<f64> {
        self.inner.eq_con(u)
    }
    fn eq_jac(&self, u: ndarray::ArrayView1<'_, f64>) -> ndarray::Array2<f64> {
        self.inner.eq_jac(u)
    }
    fn ineq_con(&self, u: ndarray::ArrayView1<'_, f64>) -> Array1<f64> {
        self.inner.ineq_con(u)
    }
    fn ineq_jac(&self, u: ndarray::ArrayView1<'_, f64>) -> ndarray::Array2<f64> {
        self.inner.ineq_jac(u)
    }
    fn lag_hessian(
        &self,
        u: ndarray::ArrayView1<'_, f64>,
        lambda: ndarray::ArrayView1<'_, f64>,
        w: ndarray::ArrayView1<'_, f64>,
    ) -> ndarray::Array2<f64> {
        self.inner.lag_hessian(u, lambda, w)
    }
}

fn cmd_check_grad(
    scenario_path: PathBuf,
    points: usize,
    horizon: usize,
    dt: f64,
    tol: f64,
    inject_bug: bool,
) -> ExitCode {
    let scenario = match load(&scenario_path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let states = scenario.initial_states();
    let nlp = match build_nlp(&scenario, &states, 0.0, horizon, dt, &HorizonOptions::default()) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let corrupted;
    let problem: &dyn NlpProblem<f64> = if inject_bug {
        corrupted = CorruptedGradient { inner: &nlp };
        &corrupted
    } else {
        &nlp
    };

    let hold: Vec<ControlInput> = scenario
        .uavs
        .iter()
        .map(|u| ControlInput::hold(u.initial_speed))
        .collect();
    let base = nlp.rollout_guess(&hold);
    let mut rng = StdRng::seed_from_u64(20_240_817);
    let mut worst = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    let mut ok = true;
    for k in 0..points {
        let point = Array1::from_iter(
            base.iter()
                .map(|&x| x + rng.random_range(-0.05..0.05) * (1.0 + x.abs())),
        );
        let report = fd_check(problem, point.view(), tol);
        worst.0 = worst.0.max(report.objective_grad);
        worst.1 = worst.1.max(report.eq_jac.unwrap_or(0.0));
        worst.2 = worst.2.max(report.ineq_jac.unwrap_or(0.0));
        worst.3 = worst.3.max(report.lag_hessian);
        if !report.ok() {
            ok = false;
            eprintln!("point {k}: flagged {:?}", report.flagged());
        }
    }
    println!("checked {points} points (horizon {horizon}, dt {dt}):");
    println!("  objective_grad worst relative error: {:.3e}", worst.0);
    println!("  eq_jac         worst relative error: {:.3e}", worst.1);
    println!("  ineq_jac       worst relative error: {:.3e}", worst.2);
    println!("  lag_hessian    worst relative error: {:.3e}", worst.3);
    if ok {
        println!("all derivatives within {tol:.1e}");
        ExitCode::SUCCESS
    } else {
        eprintln!("derivative check FAILED (tolerance {tol:.1e})");
        ExitCode::from(1)
    }
}

fn cmd_metrics(scenario_path: PathBuf, trajectory: PathBuf, out: Option<PathBuf>) -> ExitCode {
    let scenario = match load(&scenario_path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let rows = match read_trajectory_csv(&trajectory) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", trajectory.display());
            return ExitCode::from(2);
        }
    };
    let traj = trajectory_from_rows(&rows, &scenario);
    let metrics = compute_metrics(&traj, &scenario);
    match out {
        Some(path) => {
            if let Err(e) = write_metrics_json(&metrics, &path) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(2);
            }
            println!("metrics written to {}", path.display());
        }
        None => {
            println!(
                "{{\"p_r\": {}, \"p_m\": {}, \"min_separation_m\": {}, \"connectivity_fraction\": {}, \"failed_steps\": {}, \"total_steps\": {}}}",
                metrics.p_r,
                metrics.p_m,
                metrics.min_separation_m,
                metrics.connectivity_fraction,
                metrics.failed_steps,
                metrics.total_steps
            );
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    // Verbosity comes from FORMA_LOG: error, info, or debug.
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FORMA_LOG", "error")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            out,
            dt,
            duration,
            horizon,
            cone_sense,
            solver,
        } => cmd_run(scenario, out, dt, duration, horizon, cone_sense, solver),
        Command::Solve { problem, solver } => cmd_solve(problem, solver),
        Command::CheckGrad {
            scenario,
            points,
            horizon,
            dt,
            tol,
            inject_gradient_bug,
        } => cmd_check_grad(scenario, points, horizon, dt, tol, inject_gradient_bug),
        Command::Metrics {
            scenario,
            trajectory,
            out,
        } => cmd_metrics(scenario, trajectory, out),
    }
}
