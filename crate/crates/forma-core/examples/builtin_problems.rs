//! Solves every built-in problem and prints a one-line summary.
//!
//! Run with: `cargo run --release -p forma-core --example builtin_problems`

use forma_core::problems;
use forma_core::{solve, IterateV, SolverConfig};

fn main() {
    let cfg = SolverConfig {
        xi: 1e-8,
        sigma: 1e-8,
        adaptive_tau: true,
        max_iters: 50,
        ..SolverConfig::default()
    };
    for oracle in problems::all_oracles::<f64>() {
        let v0 = IterateV::from_primal(&oracle.problem, oracle.start.clone());
        let r = solve(&oracle.problem, v0, &cfg).expect("well-formed problem");
        let err = r
            .final_iterate
            .u
            .iter()
            .zip(oracle.u_star.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        println!(
            "{:14} {:?} in {:2} iterations, residual {:9.2e}, primal error {:9.2e}",
            oracle.name, r.status, r.iterations, r.final_residual_inf, err
        );
    }
}
