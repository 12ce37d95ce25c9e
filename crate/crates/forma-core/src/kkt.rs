//! Barrier Lagrangian, perturbed KKT residual, and its Jacobian.
//!
//! Sign convention used throughout:
//!
//! ```text
//! L(u, lambda, w, s) = F(u) + lambda^T (G(u) + s) + w^T H(u) - mu * sum_j log(s_j)
//! ```
//!
//! with stationarity `grad F + grad G^T lambda + grad H^T w = 0` and perturbed
//! complementarity `lambda ∘ s = mu * e`. Multipliers stay nonnegative for
//! `G <= 0` constraints under this convention.

use crate::nlp::{IterateV, NlpError, NlpProblem};
use crate::num::{inf_norm, Real};
use ndarray::{s, Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KktError {
    #[error(transparent)]
    Nlp(#[from] NlpError),
    #[error("callback output {what}: expected {expected} {unit}, got {got}")]
    CallbackShape {
        what: &'static str,
        expected: usize,
        got: usize,
        unit: &'static str,
    },
}

/// Blocks of the perturbed KKT residual `F_mu(v)`.
#[derive(Debug, Clone)]
pub struct KktResidual<T> {
    /// `grad F(u) + grad G(u)^T lambda + grad H(u)^T w`, length `n_vars`.
    pub stationarity: Array1<T>,
    /// `G(u) + s`, length `n_ineq`.
    pub primal_ineq: Array1<T>,
    /// `H(u)`, length `n_eq`.
    pub primal_eq: Array1<T>,
    /// `lambda ∘ s - mu * e`, length `n_ineq`.
    pub complementarity: Array1<T>,
}

impl<T: Real> KktResidual<T> {
    pub fn len(&self) -> usize {
        self.stationarity.len()
            + self.primal_ineq.len()
            + self.primal_eq.len()
            + self.complementarity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenates the blocks in (stationarity, primal_ineq, primal_eq,
    /// complementarity) order, matching the Jacobian's row layout.
    pub fn concat(&self) -> Array1<T> {
        let mut out = Array1::zeros(self.len());
        let mut k = 0;
        for block in [
            &self.stationarity,
            &self.primal_ineq,
            &self.primal_eq,
            &self.complementarity,
        ] {
            out.slice_mut(s![k..k + block.len()]).assign(block);
            k += block.len();
        }
        out
    }

    pub fn inf_norm(&self) -> T {
        [
            &self.stationarity,
            &self.primal_ineq,
            &self.primal_eq,
            &self.complementarity,
        ]
        .iter()
        .map(|b| inf_norm(b.view()))
        .fold(T::zero(), |a, b| a.max(b))
    }
}

/// Dense Jacobian of the perturbed KKT residual with the 4x4 block layout
///
/// ```text
/// [ hess L   grad G^T   grad H^T   0      ]
/// [ grad G   0          0          I      ]
/// [ grad H   0          0          0      ]
/// [ 0        S          0          Lambda ]
/// ```
///
/// where `S = diag(s)` and `Lambda = diag(lambda)`, so the directional
/// derivative of the complementarity block is `lambda ∘ ds + s ∘ dlambda`.
#[derive(Debug, Clone)]
pub struct KktJacobian<T> {
    pub mat: Array2<T>,
    pub n_vars: usize,
    pub n_ineq: usize,
    pub n_eq: usize,
}

impl<T: Real> KktJacobian<T> {
    /// Order of the square matrix: `n_vars + n_ineq + n_eq + n_ineq`.
    pub fn order(&self) -> usize {
        self.n_vars + 2 * self.n_ineq + self.n_eq
    }

    /// Matrix-vector product `J * x`.
    pub fn apply(&self, x: &Array1<T>) -> Array1<T> {
        self.mat.dot(x)
    }

    /// Gradient of the merit function `phi = ||F||^2`: `2 J^T F`.
    pub fn merit_gradient(&self, residual: &Array1<T>) -> Array1<T> {
        self.mat.t().dot(residual) * T::of(2.0)
    }
}

fn check_len<T>(what: &'static str, v: &Array1<T>, expected: usize) -> Result<(), KktError> {
    if v.len() != expected {
        return Err(KktError::CallbackShape {
            what,
            expected,
            got: v.len(),
            unit: "entries",
        });
    }
    Ok(())
}

fn check_shape<T>(
    what: &'static str,
    m: &Array2<T>,
    rows: usize,
    cols: usize,
) -> Result<(), KktError> {
    if m.nrows() != rows {
        return Err(KktError::CallbackShape {
            what,
            expected: rows,
            got: m.nrows(),
            unit: "rows",
        });
    }
    if m.ncols() != cols {
        return Err(KktError::CallbackShape {
            what,
            expected: cols,
            got: m.ncols(),
            unit: "cols",
        });
    }
    Ok(())
}

/// Value of the barrier Lagrangian
/// `F(u) + lambda^T (G(u)+s) + w^T H(u) - mu * sum_j log s_j`.
///
/// Fails if any slack is non-positive (the log term is undefined there).
pub fn barrier_lagrangian<T: Real>(
    problem: &dyn NlpProblem<T>,
    v: &IterateV<T>,
    mu: T,
) -> Result<T, KktError> {
    v.validate_for(problem)?;
    for (i, &si) in v.s.iter().enumerate() {
        if si <= T::zero() {
            return Err(NlpError::NonPositiveSlack {
                index: i,
                value: si.to_f64().unwrap_or(f64::NAN),
            }
            .into());
        }
    }
    let g = problem.ineq_con(v.u.view());
    check_len("ineq_con", &g, problem.n_ineq())?;
    let h = problem.eq_con(v.u.view());
    check_len("eq_con", &h, problem.n_eq())?;

    let mut val = problem.objective(v.u.view());
    val += v
        .lambda
        .iter()
        .zip(g.iter().zip(v.s.iter()))
        .map(|(&li, (&gi, &si))| li * (gi + si))
        .sum::<T>();
    val += v.w.iter().zip(h.iter()).map(|(&wi, &hi)| wi * hi).sum::<T>();
    val -= mu * v.s.iter().map(|&si| si.ln()).sum::<T>();
    Ok(val)
}

/// Perturbed KKT residual `F_mu(v)`; `mu = 0` gives the unperturbed residual
/// whose norm the convergence test uses.
pub fn kkt_residual<T: Real>(
    problem: &dyn NlpProblem<T>,
    v: &IterateV<T>,
    mu: T,
) -> Result<KktResidual<T>, KktError> {
    v.validate_for(problem)?;
    let n = problem.n_vars();
    let m = problem.n_ineq();
    let p = problem.n_eq();

    let mut stationarity = problem.objective_grad(v.u.view());
    check_len("objective_grad", &stationarity, n)?;
    if m > 0 {
        let gj = problem.ineq_jac(v.u.view());
        check_shape("ineq_jac", &gj, m, n)?;
        stationarity = stationarity + gj.t().dot(&v.lambda);
    }
    if p > 0 {
        let hj = problem.eq_jac(v.u.view());
        check_shape("eq_jac", &hj, p, n)?;
        stationarity = stationarity + hj.t().dot(&v.w);
    }

    let g = problem.ineq_con(v.u.view());
    check_len("ineq_con", &g, m)?;
    let primal_ineq = &g + &v.s;

    let primal_eq = problem.eq_con(v.u.view());
    check_len("eq_con", &primal_eq, p)?;

    let complementarity = Array1::from_iter(
        v.lambda
            .iter()
            .zip(v.s.iter())
            .map(|(&li, &si)| li * si - mu),
    );

    Ok(KktResidual {
        stationarity,
        primal_ineq,
        primal_eq,
        complementarity,
    })
}

/// Dense Jacobian of the KKT residual at `v`.
pub fn kkt_jacobian<T: Real>(
    problem: &dyn NlpProblem<T>,
    v: &IterateV<T>,
) -> Result<KktJacobian<T>, KktError> {
    v.validate_for(problem)?;
    let n = problem.n_vars();
    let m = problem.n_ineq();
    let p = problem.n_eq();
    let order = n + 2 * m + p;

    let hess = problem.lag_hessian(v.u.view(), v.lambda.view(), v.w.view());
    check_shape("lag_hessian", &hess, n, n)?;

    let mut mat = Array2::zeros((order, order));
    mat.slice_mut(s![0..n, 0..n]).assign(&hess);

    if m > 0 {
        let gj = problem.ineq_jac(v.u.view());
        check_shape("ineq_jac", &gj, m, n)?;
        mat.slice_mut(s![0..n, n..n + m]).assign(&gj.t());
        mat.slice_mut(s![n..n + m, 0..n]).assign(&gj);
        for i in 0..m {
            // Primal inequality rows carry the identity on the slack block.
            mat[(n + i, n + m + p + i)] = T::one();
            // Complementarity rows: d(lambda ∘ s) = S dlambda + Lambda ds.
            mat[(n + m + p + i, n + i)] = v.s[i];
            mat[(n + m + p + i, n + m + p + i)] = v.lambda[i];
        }
    }

    if p > 0 {
        let hj = problem.eq_jac(v.u.view());
        check_shape("eq_jac", &hj, p, n)?;
        mat.slice_mut(s![0..n, n + m..n + m + p]).assign(&hj.t());
        mat.slice_mut(s![n + m..n + m + p, 0..n]).assign(&hj);
    }

    Ok(KktJacobian {
        mat,
        n_vars: n,
        n_ineq: m,
        n_eq: p,
    })
}

/// Merit function: squared l2-norm of the residual, summed over all blocks.
pub fn merit<T: Real>(residual: &KktResidual<T>) -> T {
    [
        &residual.stationarity,
        &residual.primal_ineq,
        &residual.primal_eq,
        &residual.complementarity,
    ]
    .iter()
    .map(|b| b.iter().map(|&x| x * x).sum::<T>())
    .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::CallbackProblem;
    use ndarray::array;

    fn unconstrained_zero() -> CallbackProblem<f64> {
        CallbackProblem::new(1, |_| 0.0, |_| array![0.0], |_, _, _| array![[0.0]])
    }

    fn square_with_ineq() -> CallbackProblem<f64> {
        // F(u) = u^2, one inequality g = u - 2.
        CallbackProblem::new(
            1,
            |u| u[0] * u[0],
            |u| array![2.0 * u[0]],
            |_, _, _| array![[2.0]],
        )
        .with_ineq(1, |u| array![u[0] - 2.0], |_| array![[1.0]])
    }

    #[test]
    fn barrier_empty_sums_are_zero() {
        let p = unconstrained_zero();
        let v = IterateV {
            u: array![1.0],
            lambda: Array1::zeros(0),
            w: Array1::zeros(0),
            s: Array1::zeros(0),
        };
        assert_eq!(barrier_lagrangian(&p, &v, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn barrier_log_one_vanishes() {
        // F=u^2 at u=1, g = -1, s=1, lambda=1, mu=1:
        // 1 + 1*(-1+1) + 0 - 1*log(1) = 1.
        let p = square_with_ineq();
        let v = IterateV {
            u: array![1.0],
            lambda: array![1.0],
            w: Array1::zeros(0),
            s: array![1.0],
        };
        assert!((barrier_lagrangian(&p, &v, 1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn barrier_rejects_nonpositive_slack() {
        let p = square_with_ineq();
        let v = IterateV {
            u: array![1.0],
            lambda: array![1.0],
            w: Array1::zeros(0),
            s: array![0.0],
        };
        assert!(barrier_lagrangian(&p, &v, 1.0).is_err());
    }

    #[test]
    fn barrier_blows_up_as_slack_shrinks() {
        // With everything else fixed, -mu log(s) grows monotonically as s -> 0+.
        let p = square_with_ineq();
        let mut prev = f64::NEG_INFINITY;
        for &s in &[1.0, 1e-1, 1e-2, 1e-4, 1e-8, 1e-12] {
            let v = IterateV {
                u: array![1.0],
                lambda: array![1.0],
                w: Array1::zeros(0),
                s: array![s],
            };
            let val = barrier_lagrangian(&p, &v, 1.0).unwrap();
            assert!(val > prev, "barrier not increasing at s={s}");
            prev = val;
        }
    }

    #[test]
    fn residual_vanishes_at_analytic_kkt_point() {
        // min (x-2)^2 s.t. x <= 1: x* = 1, lambda* = 2 (from 2(x-2)+lambda = 0),
        // s* = 0 replaced by eps with mu = lambda*eps.
        let p = CallbackProblem::new(
            1,
            |u: ndarray::ArrayView1<f64>| (u[0] - 2.0).powi(2),
            |u| array![2.0 * (u[0] - 2.0)],
            |_, _, _| array![[2.0]],
        )
        .with_ineq(1, |u| array![u[0] - 1.0], |_| array![[1.0]]);
        let eps = 1e-12;
        let v = IterateV {
            u: array![1.0],
            lambda: array![2.0],
            w: Array1::zeros(0),
            s: array![eps],
        };
        let r = kkt_residual(&p, &v, 2.0 * eps).unwrap();
        assert!(r.inf_norm() <= 1e-10, "residual {}", r.inf_norm());
    }

    #[test]
    fn complementarity_exactly_zero_when_mu_zero() {
        let p = square_with_ineq();
        let v = IterateV {
            u: array![0.0],
            lambda: array![1e-300],
            w: Array1::zeros(0),
            s: array![0.0 + 1e-300],
        };
        let r = kkt_residual(&p, &v, 0.0).unwrap();
        assert_eq!(r.complementarity[0], 0.0);
    }

    #[test]
    fn jacobian_degenerates_to_objective_hessian() {
        let p = CallbackProblem::new(
            1,
            |u: ndarray::ArrayView1<f64>| 3.0 * u[0] * u[0],
            |u| array![6.0 * u[0]],
            |_, _, _| array![[6.0]],
        );
        let v = IterateV {
            u: array![0.7],
            lambda: Array1::zeros(0),
            w: Array1::zeros(0),
            s: Array1::zeros(0),
        };
        let j = kkt_jacobian(&p, &v).unwrap();
        assert_eq!(j.order(), 1);
        assert_eq!(j.mat[(0, 0)], 6.0);
    }

    #[test]
    fn complementarity_row_uses_s_and_lambda_diagonals() {
        let p = square_with_ineq();
        let v = IterateV {
            u: array![0.0],
            lambda: array![3.0],
            w: Array1::zeros(0),
            s: array![2.0],
        };
        let j = kkt_jacobian(&p, &v).unwrap();
        // Block order of columns: (u, lambda, w, s); complementarity row is last.
        let row = j.mat.row(j.order() - 1);
        assert_eq!(row[0], 0.0);
        assert_eq!(row[1], 2.0);
        assert_eq!(row[2], 3.0);
    }

    #[test]
    fn merit_trivial_values() {
        let zero = KktResidual::<f64> {
            stationarity: Array1::zeros(2),
            primal_ineq: Array1::zeros(1),
            primal_eq: Array1::zeros(0),
            complementarity: Array1::zeros(1),
        };
        assert_eq!(merit(&zero), 0.0);
        let r = KktResidual::<f64> {
            stationarity: array![3.0],
            primal_ineq: array![4.0],
            primal_eq: Array1::zeros(0),
            complementarity: Array1::zeros(0),
        };
        assert_eq!(merit(&r), 25.0);
    }
}
