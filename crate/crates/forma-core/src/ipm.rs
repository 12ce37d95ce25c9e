//! Damped primal-dual Newton interior-point iteration.
//!
//! Each iteration: test convergence on the unperturbed residual, pick the
//! barrier parameter from the duality gap, solve the Newton system, cap the
//! dual steps with the fraction-to-boundary rule, and backtrack the primal
//! step until the squared-residual merit satisfies an Armijo decrease.

use crate::kkt::{kkt_jacobian, kkt_residual, merit, KktError};
use crate::linsolve::{
    is_positive_definite, matrix_rank, nullspace_basis, solve_kkt, LinSolveError,
};
use crate::nlp::{IterateV, NlpError, NlpProblem};
use crate::num::{inf_norm, Real};
use ndarray::{s, Array1, Array2, ArrayView1};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IpmError {
    #[error(transparent)]
    Nlp(#[from] NlpError),
    #[error(transparent)]
    Kkt(#[from] KktError),
    #[error("initial iterate must have strictly positive lambda and s")]
    InvalidStart,
}

/// Tunable parameters; defaults follow the conventional safe choices.
#[derive(Debug, Clone)]
pub struct SolverConfig<T> {
    /// Centering factor in (0, 1) for the barrier update.
    pub sigma: T,
    /// Fraction-to-boundary factor in (0, 1].
    pub tau: T,
    /// Armijo constant in (0, 1).
    pub beta: T,
    /// Convergence threshold on the unperturbed residual infinity norm.
    pub xi: T,
    /// Iteration budget.
    pub max_iters: usize,
    /// Multiplicative backtracking factor in (0, 1).
    pub backtrack_factor: T,
    /// Smallest primal step length the line search will try.
    pub min_alpha: T,
    /// Regularization deltas tried in order by the linear solver.
    pub delta_schedule: Vec<T>,
    /// Compute the regularity report at the final iterate.
    pub regularity_diagnostics: bool,
    /// Tighten the fraction-to-boundary factor toward 1 as the residual
    /// shrinks (`tau_k = max(tau, 1 - r_k)`). Off by default; the fixed
    /// factor is the conventional safe choice, but it caps the local
    /// contraction rate at `1 - tau`, so runs that need a superlinear tail
    /// enable this.
    pub adaptive_tau: bool,
    /// Keep the barrier parameter proportional to the primal inequality
    /// infeasibility as well as the duality gap: `mu_k = sigma * max(gap /
    /// n_ineq, ||G(u)+s||_inf)`. Without this the gap can collapse while the
    /// iterate is still infeasible, wedging slacks against the boundary and
    /// stalling the fraction-to-boundary rule.
    pub mu_safeguard: bool,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            sigma: T::of(0.1),
            tau: T::of(0.995),
            beta: T::of(1e-4),
            xi: T::of(0.01),
            max_iters: 100,
            backtrack_factor: T::of(0.5),
            min_alpha: T::of(1e-10),
            delta_schedule: vec![
                T::zero(),
                T::of(1e-8),
                T::of(1e-6),
                T::of(1e-4),
                T::of(1e-2),
                T::one(),
            ],
            regularity_diagnostics: true,
            adaptive_tau: false,
            mu_safeguard: true,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<(), NlpError> {
        let ok = self.sigma > T::zero()
            && self.sigma < T::one()
            && self.tau > T::zero()
            && self.tau <= T::one()
            && self.beta > T::zero()
            && self.beta < T::one()
            && self.xi > T::zero()
            && self.backtrack_factor > T::zero()
            && self.backtrack_factor < T::one()
            && self.min_alpha > T::zero()
            && !self.delta_schedule.is_empty();
        if ok {
            Ok(())
        } else {
            Err(NlpError::InvalidConfig(
                "solver parameter out of range".to_string(),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Converged,
    MaxIters,
    RegularizationFailure,
    LineSearchFailure,
}

/// Step lengths applied to the four blocks of one iterate update.
#[derive(Debug, Clone, Copy)]
pub struct StepLengths<T> {
    pub alpha_u: T,
    pub alpha_lambda: T,
    pub alpha_w: T,
    pub alpha_s: T,
}

/// Armijo bookkeeping for one accepted step.
#[derive(Debug, Clone, Copy)]
pub struct ArmijoRecord<T> {
    /// Merit (at the iteration's barrier parameter) before the step.
    pub phi_before: T,
    /// Merit after the accepted step.
    pub phi_after: T,
    pub alpha_p: T,
    /// Directional derivative `grad(phi)^T dv` of the full Newton step.
    pub dir_derivative: T,
    pub backtracks: usize,
}

/// Regularity diagnostics at a candidate solution.
#[derive(Debug, Clone)]
pub struct RegularityReport<T> {
    /// Active-constraint gradients are linearly independent.
    pub licq_rank_ok: bool,
    /// `min_i (lambda_i + |g_i(u)|) > 1e-8`.
    pub strict_complementarity_ok: bool,
    /// Lagrangian Hessian positive definite on the active-constraint nullspace.
    pub second_order_flag: bool,
    pub active_set: Vec<usize>,
    pub active_rank: usize,
    pub min_complementarity_margin: T,
}

#[derive(Debug, Clone)]
pub struct SolverResult<T> {
    pub status: SolverStatus,
    pub final_iterate: IterateV<T>,
    /// Per-iteration (merit, infinity norm) of the unperturbed residual,
    /// measured at the iterate the step started from.
    pub residual_history: Vec<(T, T)>,
    pub mu_history: Vec<T>,
    pub step_history: Vec<StepLengths<T>>,
    /// Per-iteration (min lambda, min s) after the accepted step.
    pub positivity_history: Vec<(T, T)>,
    pub armijo_history: Vec<ArmijoRecord<T>>,
    pub diagnostics: Option<RegularityReport<T>>,
    pub iterations: usize,
    /// Infinity norm of the unperturbed residual at the final iterate.
    pub final_residual_inf: T,
}

/// Barrier parameter choice: `mu = sigma * (lambda^T s) / n_ineq`, or zero
/// for problems without inequalities.
pub fn update_mu<T: Real>(lambda: ArrayView1<'_, T>, s: ArrayView1<'_, T>, sigma: T) -> T {
    let m = lambda.len();
    if m == 0 {
        return T::zero();
    }
    sigma * lambda.dot(&s) / T::of(m as f64)
}

/// Largest multiple of `dz` keeping `z + alpha * dz >= 0`, capped at one:
/// `alpha_hat = -1 / min(min_j(dz_j / z_j), -1)`.
///
/// An empty `z` imposes no cap and yields positive infinity.
pub fn max_step<T: Real>(z: ArrayView1<'_, T>, dz: ArrayView1<'_, T>) -> T {
    if z.is_empty() {
        return T::infinity();
    }
    let mut worst = -T::one();
    for (&zi, &di) in z.iter().zip(dz.iter()) {
        worst = worst.min(di / zi);
    }
    -T::one() / worst
}

/// Unperturbed-residual convergence test.
pub fn converged<T: Real>(
    problem: &dyn NlpProblem<T>,
    v: &IterateV<T>,
    xi: T,
) -> Result<bool, KktError> {
    Ok(kkt_residual(problem, v, T::zero())?.inf_norm() <= xi)
}

/// Accepted iterate and bookkeeping from one line search.
#[derive(Debug, Clone)]
pub struct LineSearchOutcome<T> {
    pub accepted: IterateV<T>,
    pub steps: StepLengths<T>,
    pub record: ArmijoRecord<T>,
}

fn apply_step<T: Real>(v: &IterateV<T>, dv: &Array1<T>, steps: &StepLengths<T>) -> IterateV<T> {
    let n = v.u.len();
    let m = v.lambda.len();
    let p = v.w.len();
    let du = dv.slice(s![0..n]);
    let dl = dv.slice(s![n..n + m]);
    let dw = dv.slice(s![n + m..n + m + p]);
    let ds = dv.slice(s![n + m + p..n + 2 * m + p]);
    IterateV {
        u: &v.u + &(&du * steps.alpha_u),
        lambda: &v.lambda + &(&dl * steps.alpha_lambda),
        w: &v.w + &(&dw * steps.alpha_w),
        s: &v.s + &(&ds * steps.alpha_s),
    }
}

/// Backtracking line search on the perturbed merit.
///
/// The first trial is the split step: dual blocks at their
/// fraction-to-boundary caps `alpha_s = min(1, tau * alpha_hat_s)`,
/// `alpha_lambda = min(1, tau * alpha_hat_lambda)`, and the primal step
/// `alpha_p` (shared by `u` and `w`) at the smaller of the two. If that
/// trial fails the Armijo test, backtracking switches to a single common
/// step length for all four blocks, shrinking by `backtrack_factor`: the
/// common-length trials lie on the ray `v + alpha dv`, along which the
/// computed direction is guaranteed descent, so the search terminates.
/// (Backtracking the primal step alone against fixed dual caps need not
/// reduce the merit at all, and unequal per-block shrinking can reweight
/// the direction enough to destroy descent.)
///
/// Every accepted step satisfies
/// `phi(v + L dv) <= phi(v) + beta * alpha_p * grad(phi)^T dv`.
#[allow(clippy::too_many_arguments)]
pub fn line_search<T: Real>(
    problem: &dyn NlpProblem<T>,
    v: &IterateV<T>,
    dv: &Array1<T>,
    mu: T,
    alpha_hat_s: T,
    alpha_hat_lambda: T,
    dir_derivative: T,
    tau: T,
    config: &SolverConfig<T>,
) -> Result<Option<LineSearchOutcome<T>>, KktError> {
    let alpha_s_cap = T::one().min(tau * alpha_hat_s);
    let alpha_lambda_cap = T::one().min(tau * alpha_hat_lambda);
    let alpha_p0 = T::one().min(alpha_s_cap).min(alpha_lambda_cap);
    let phi_before = merit(&kkt_residual(problem, v, mu)?);

    let mut alpha = alpha_p0;
    let mut backtracks = 0;
    while alpha >= config.min_alpha {
        let steps = if backtracks == 0 {
            StepLengths {
                alpha_u: alpha_p0,
                alpha_lambda: alpha_lambda_cap,
                alpha_w: alpha_p0,
                alpha_s: alpha_s_cap,
            }
        } else {
            StepLengths {
                alpha_u: alpha,
                alpha_lambda: alpha,
                alpha_w: alpha,
                alpha_s: alpha,
            }
        };
        let trial = apply_step(v, dv, &steps);
        let phi_trial = merit(&kkt_residual(problem, &trial, mu)?);
        if phi_trial.is_finite()
            && phi_trial <= phi_before + config.beta * steps.alpha_u * dir_derivative
        {
            return Ok(Some(LineSearchOutcome {
                accepted: trial,
                steps,
                record: ArmijoRecord {
                    phi_before,
                    phi_after: phi_trial,
                    alpha_p: steps.alpha_u,
                    dir_derivative,
                    backtracks,
                },
            }));
        }
        if backtracks > 0 {
            alpha *= config.backtrack_factor;
        }
        backtracks += 1;
    }
    Ok(None)
}

/// Runs the damped Newton interior-point iteration from `v0`.
///
/// Every accepted iterate keeps `(lambda, s)` strictly positive. Algorithmic
/// failures (iteration budget, line search stall, regularization exhaustion)
/// are reported through `SolverStatus` with the last accepted iterate; only
/// structural problems (bad dimensions, invalid start) are `Err`.
pub fn solve<T: Real>(
    problem: &dyn NlpProblem<T>,
    v0: IterateV<T>,
    config: &SolverConfig<T>,
) -> Result<SolverResult<T>, IpmError> {
    config.validate()?;
    v0.validate_for(problem)?;
    if problem.n_ineq() > 0 && (v0.min_lambda() <= T::zero() || v0.min_slack() <= T::zero()) {
        return Err(IpmError::InvalidStart);
    }

    let mut v = v0;
    let mut residual_history = Vec::new();
    let mut mu_history = Vec::new();
    let mut step_history = Vec::new();
    let mut positivity_history = Vec::new();
    let mut armijo_history = Vec::new();
    let mut status = SolverStatus::MaxIters;
    let mut final_residual_inf = T::infinity();

    for _k in 0..config.max_iters {
        let res0 = kkt_residual(problem, &v, T::zero())?;
        let r_inf = res0.inf_norm();
        final_residual_inf = r_inf;
        if r_inf <= config.xi {
            status = SolverStatus::Converged;
            break;
        }

        let mut mu = update_mu(v.lambda.view(), v.s.view(), config.sigma);
        if config.mu_safeguard && problem.n_ineq() > 0 {
            let infeas = inf_norm(res0.primal_ineq.view());
            mu = mu.max(config.sigma * infeas);
        }
        let res_mu = kkt_residual(problem, &v, mu)?;
        let jac = kkt_jacobian(problem, &v)?;
        let rhs = -res_mu.concat();

        let step = match solve_kkt(&jac, &rhs, &config.delta_schedule) {
            Ok(report) => report,
            Err(LinSolveError::RegularizationExhausted { .. }) => {
                status = SolverStatus::RegularizationFailure;
                break;
            }
            Err(_) => {
                // Dimension errors cannot occur for a residual/Jacobian pair
                // built from the same problem; treat like regularization
                // failure rather than panicking.
                status = SolverStatus::RegularizationFailure;
                break;
            }
        };
        let dv = step.solution;

        let n = problem.n_vars();
        let m = problem.n_ineq();
        let p = problem.n_eq();
        let ds = dv.slice(s![n + m + p..n + 2 * m + p]);
        let dl = dv.slice(s![n..n + m]);
        let alpha_hat_s = max_step(v.s.view(), ds);
        let alpha_hat_lambda = max_step(v.lambda.view(), dl);

        // grad(phi)^T dv at the perturbed residual; the solver guaranteed a
        // descent direction so this is negative.
        let dir_derivative = T::of(2.0) * jac.apply(&dv).dot(&res_mu.concat());

        let tau = if config.adaptive_tau {
            // Never let tau reach 1 exactly; a boundary-exact step would
            // zero out a slack or multiplier.
            config
                .tau
                .max(T::one() - r_inf)
                .min(T::one() - T::epsilon().sqrt())
        } else {
            config.tau
        };

        let outcome = line_search(
            problem,
            &v,
            &dv,
            mu,
            alpha_hat_s,
            alpha_hat_lambda,
            dir_derivative,
            tau,
            config,
        )?;
        let outcome = match outcome {
            Some(o) => o,
            None => {
                status = SolverStatus::LineSearchFailure;
                break;
            }
        };

        residual_history.push((merit(&res0), r_inf));
        mu_history.push(mu);
        step_history.push(outcome.steps);
        armijo_history.push(outcome.record);
        v = outcome.accepted;
        positivity_history.push((v.min_lambda(), v.min_slack()));
    }

    if status == SolverStatus::MaxIters || status == SolverStatus::Converged {
        // Refresh the final norm (covers the max-iters path where the last
        // step was accepted after the last recorded residual).
        final_residual_inf = kkt_residual(problem, &v, T::zero())?.inf_norm();
        if final_residual_inf <= config.xi {
            status = SolverStatus::Converged;
        }
    }

    let diagnostics = if config.regularity_diagnostics {
        Some(check_regularity(problem, &v)?)
    } else {
        None
    };

    Ok(SolverResult {
        status,
        iterations: residual_history.len(),
        final_iterate: v,
        residual_history,
        mu_history,
        step_history,
        positivity_history,
        armijo_history,
        diagnostics,
        final_residual_inf,
    })
}

/// Checks the classical regularity assumptions at a candidate solution:
/// linear independence of active-constraint gradients, strict
/// complementarity, and second-order sufficiency on the active nullspace.
pub fn check_regularity<T: Real>(
    problem: &dyn NlpProblem<T>,
    v: &IterateV<T>,
) -> Result<RegularityReport<T>, KktError> {
    v.validate_for(problem)?;
    let n = problem.n_vars();
    let m = problem.n_ineq();
    let p = problem.n_eq();

    let g = problem.ineq_con(v.u.view());
    let active: Vec<usize> = (0..m)
        .filter(|&i| g[i].abs() <= T::of(1e-6))
        .collect();

    // Stack equality rows with active inequality rows.
    let mut stacked = Array2::zeros((p + active.len(), n));
    if p > 0 {
        let hj = problem.eq_jac(v.u.view());
        stacked.slice_mut(s![0..p, ..]).assign(&hj);
    }
    if !active.is_empty() {
        let gj = problem.ineq_jac(v.u.view());
        for (r, &i) in active.iter().enumerate() {
            stacked.slice_mut(s![p + r, ..]).assign(&gj.row(i));
        }
    }
    let rank = matrix_rank(&stacked);
    let licq_rank_ok = rank == p + active.len();

    let mut margin = T::infinity();
    for i in 0..m {
        margin = margin.min(v.lambda[i] + g[i].abs());
    }
    let strict_complementarity_ok = m == 0 || margin > T::of(1e-8);

    let hess = problem.lag_hessian(v.u.view(), v.lambda.view(), v.w.view());
    let second_order_flag = if p + active.len() == 0 {
        is_positive_definite(&hess)
    } else {
        let z = nullspace_basis(&stacked);
        if z.ncols() == 0 {
            true
        } else {
            let projected = z.t().dot(&hess).dot(&z);
            is_positive_definite(&projected)
        }
    };

    Ok(RegularityReport {
        licq_rank_ok,
        strict_complementarity_ok,
        second_order_flag,
        active_set: active,
        active_rank: rank,
        min_complementarity_margin: if m == 0 { T::infinity() } else { margin },
    })
}
