//! Primal-dual Newton interior-point toolkit for nonlinear programs.
//!
//! The crate is organized as:
//!
//! - [`nlp`]: the problem abstraction (`min F(u)` s.t. `H(u) = 0`,
//!   `G(u) <= 0`) and the solver iterate `v = (u, lambda, w, s)`.
//! - [`kkt`]: the barrier Lagrangian, perturbed KKT residual, its dense
//!   block Jacobian, and the squared-norm merit function.
//! - [`linsolve`]: dense pivoted factorization and the regularized Newton
//!   system solve.
//! - [`ipm`]: the damped interior-point iteration with fraction-to-boundary
//!   step limits, Armijo line search, and regularity diagnostics.
//! - [`fd`]: central-difference derivative verification.
//! - [`problems`]: small built-in problems with analytic solutions.
//!
//! Everything is generic over the scalar type via [`num::Real`] (`f32` or
//! `f64`); the aliases below fix the common double-precision instantiation.

pub mod fd;
pub mod ipm;
pub mod kkt;
pub mod linsolve;
pub mod nlp;
pub mod num;
pub mod problems;

pub use fd::{fd_check, FdReport};
pub use ipm::{
    check_regularity, converged, line_search, max_step, solve, update_mu, ArmijoRecord, IpmError,
    RegularityReport, SolverConfig, SolverResult, SolverStatus, StepLengths,
};
pub use kkt::{
    barrier_lagrangian, kkt_jacobian, kkt_residual, merit, KktError, KktJacobian, KktResidual,
};
pub use linsolve::{factor_solve, solve_kkt, ConditionFlag, LinSolveError, SolveReport};
pub use nlp::{CallbackProblem, HessianMode, IterateV, NlpError, NlpProblem};
pub use num::Real;

/// Double-precision aliases for the generic core types.
pub type IterateF64 = IterateV<f64>;
pub type KktResidualF64 = KktResidual<f64>;
pub type KktJacobianF64 = KktJacobian<f64>;
pub type SolverConfigF64 = SolverConfig<f64>;
pub type SolverResultF64 = SolverResult<f64>;
pub type SolveReportF64 = SolveReport<f64>;
pub type FdReportF64 = FdReport<f64>;

/// Single-precision aliases.
pub type IterateF32 = IterateV<f32>;
pub type SolverConfigF32 = SolverConfig<f32>;
pub type SolverResultF32 = SolverResult<f32>;
