//! Generic constrained-problem abstraction and solver iterates.
//!
//! A problem is `min F(u)  s.t.  H(u) = 0,  G(u) <= 0`, with simple bounds
//! folded into `G` as linear rows by whoever builds the problem.

use crate::num::Real;
use ndarray::{Array1, Array2, ArrayView1};
use thiserror::Error;

/// Errors raised by problem evaluation and iterate construction.
#[derive(Debug, Error)]
pub enum NlpError {
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("slack component {index} is not strictly positive ({value})")]
    NonPositiveSlack { index: usize, value: f64 },
    #[error("multiplier component {index} is not strictly positive ({value})")]
    NonPositiveMultiplier { index: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Hessian model used by a problem's `lag_hessian`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HessianMode {
    /// Full Hessian of the Lagrangian, including constraint curvature.
    Exact,
    /// Objective curvature only; constraint second derivatives are dropped.
    #[default]
    GaussNewton,
}

/// Nonlinear program with callback-supplied derivatives.
///
/// All callbacks must be pure: the same input must produce the same output,
/// and implementations must be safe to evaluate from multiple threads.
pub trait NlpProblem<T: Real>: Send + Sync {
    fn n_vars(&self) -> usize;

    fn n_eq(&self) -> usize {
        0
    }

    fn n_ineq(&self) -> usize {
        0
    }

    fn objective(&self, u: ArrayView1<'_, T>) -> T;

    fn objective_grad(&self, u: ArrayView1<'_, T>) -> Array1<T>;

    /// Equality constraint values `H(u)`, length `n_eq`.
    fn eq_con(&self, _u: ArrayView1<'_, T>) -> Array1<T> {
        Array1::zeros(0)
    }

    /// Jacobian of `H`, shape `(n_eq, n_vars)`.
    fn eq_jac(&self, _u: ArrayView1<'_, T>) -> Array2<T> {
        Array2::zeros((0, self.n_vars()))
    }

    /// Inequality constraint values `G(u)`, length `n_ineq`; satisfied iff <= 0.
    fn ineq_con(&self, _u: ArrayView1<'_, T>) -> Array1<T> {
        Array1::zeros(0)
    }

    /// Jacobian of `G`, shape `(n_ineq, n_vars)`.
    fn ineq_jac(&self, _u: ArrayView1<'_, T>) -> Array2<T> {
        Array2::zeros((0, self.n_vars()))
    }

    /// Hessian of the Lagrangian `F + lambda^T G + w^T H` at `(u, lambda, w)`.
    ///
    /// Implementations may return a Gauss-Newton surrogate that drops the
    /// constraint-curvature terms; see [`HessianMode`].
    fn lag_hessian(
        &self,
        u: ArrayView1<'_, T>,
        lambda: ArrayView1<'_, T>,
        w: ArrayView1<'_, T>,
    ) -> Array2<T>;

    fn hessian_mode(&self) -> HessianMode {
        HessianMode::GaussNewton
    }
}

type ScalarFn<T> = Box<dyn Fn(ArrayView1<'_, T>) -> T + Send + Sync>;
type VectorFn<T> = Box<dyn Fn(ArrayView1<'_, T>) -> Array1<T> + Send + Sync>;
type MatrixFn<T> = Box<dyn Fn(ArrayView1<'_, T>) -> Array2<T> + Send + Sync>;
type HessFn<T> =
    Box<dyn Fn(ArrayView1<'_, T>, ArrayView1<'_, T>, ArrayView1<'_, T>) -> Array2<T> + Send + Sync>;

/// [`NlpProblem`] assembled from closures; the usual way to define small
/// problems in tests and built-in examples.
pub struct CallbackProblem<T: Real> {
    n_vars: usize,
    n_eq: usize,
    n_ineq: usize,
    objective: ScalarFn<T>,
    objective_grad: VectorFn<T>,
    eq_con: Option<VectorFn<T>>,
    eq_jac: Option<MatrixFn<T>>,
    ineq_con: Option<VectorFn<T>>,
    ineq_jac: Option<MatrixFn<T>>,
    lag_hessian: HessFn<T>,
    mode: HessianMode,
}

impl<T: Real> CallbackProblem<T> {
    pub fn new<F, G, H>(n_vars: usize, objective: F, objective_grad: G, lag_hessian: H) -> Self
    where
        F: Fn(ArrayView1<'_, T>) -> T + Send + Sync + 'static,
        G: Fn(ArrayView1<'_, T>) -> Array1<T> + Send + Sync + 'static,
        H: Fn(ArrayView1<'_, T>, ArrayView1<'_, T>, ArrayView1<'_, T>) -> Array2<T>
            + Send
            + Sync
            + 'static,
    {
        Self {
            n_vars,
            n_eq: 0,
            n_ineq: 0,
            objective: Box::new(objective),
            objective_grad: Box::new(objective_grad),
            eq_con: None,
            eq_jac: None,
            ineq_con: None,
            ineq_jac: None,
            lag_hessian: Box::new(lag_hessian),
            mode: HessianMode::Exact,
        }
    }

    pub fn with_eq<C, J>(mut self, n_eq: usize, con: C, jac: J) -> Self
    where
        C: Fn(ArrayView1<'_, T>) -> Array1<T> + Send + Sync + 'static,
        J: Fn(ArrayView1<'_, T>) -> Array2<T> + Send + Sync + 'static,
    {
        self.n_eq = n_eq;
        self.eq_con = Some(Box::new(con));
        self.eq_jac = Some(Box::new(jac));
        self
    }

    pub fn with_ineq<C, J>(mut self, n_ineq: usize, con: C, jac: J) -> Self
    where
        C: Fn(ArrayView1<'_, T>) -> Array1<T> + Send + Sync + 'static,
        J: Fn(ArrayView1<'_, T>) -> Array2<T> + Send + Sync + 'static,
    {
        self.n_ineq = n_ineq;
        self.ineq_con = Some(Box::new(con));
        self.ineq_jac = Some(Box::new(jac));
        self
    }

    pub fn with_hessian_mode(mut self, mode: HessianMode) -> Self {
        self.mode = mode;
        self
    }
}

impl<T: Real> NlpProblem<T> for CallbackProblem<T> {
    fn n_vars(&self) -> usize {
        self.n_vars
    }

    fn n_eq(&self) -> usize {
        self.n_eq
    }

    fn n_ineq(&self) -> usize {
        self.n_ineq
    }

    fn objective(&self, u: ArrayView1<'_, T>) -> T {
        (self.objective)(u)
    }

    fn objective_grad(&self, u: ArrayView1<'_, T>) -> Array1<T> {
        (self.objective_grad)(u)
    }

    fn eq_con(&self, u: ArrayView1<'_, T>) -> Array1<T> {
        match &self.eq_con {
            Some(f) => f(u),
            None => Array1::zeros(0),
        }
    }

    fn eq_jac(&self, u: ArrayView1<'_, T>) -> Array2<T> {
        match &self.eq_jac {
            Some(f) => f(u),
            None => Array2::zeros((0, self.n_vars)),
        }
    }

    fn ineq_con(&self, u: ArrayView1<'_, T>) -> Array1<T> {
        match &self.ineq_con {
            Some(f) => f(u),
            None => Array1::zeros(0),
        }
    }

    fn ineq_jac(&self, u: ArrayView1<'_, T>) -> Array2<T> {
        match &self.ineq_jac {
            Some(f) => f(u),
            None => Array2::zeros((0, self.n_vars)),
        }
    }

    fn lag_hessian(
        &self,
        u: ArrayView1<'_, T>,
        lambda: ArrayView1<'_, T>,
        w: ArrayView1<'_, T>,
    ) -> Array2<T> {
        (self.lag_hessian)(u, lambda, w)
    }

    fn hessian_mode(&self) -> HessianMode {
        self.mode
    }
}

/// Solver iterate `v = (u, lambda, w, s)`.
///
/// `lambda` are the inequality multipliers and `s` the slacks; both must stay
/// strictly positive at every accepted iterate.
#[derive(Debug, Clone)]
pub struct IterateV<T> {
    pub u: Array1<T>,
    pub lambda: Array1<T>,
    pub w: Array1<T>,
    pub s: Array1<T>,
}

impl<T: Real> IterateV<T> {
    /// Builds an iterate, rejecting non-positive multiplier or slack entries.
    pub fn new(
        u: Array1<T>,
        lambda: Array1<T>,
        w: Array1<T>,
        s: Array1<T>,
    ) -> Result<Self, NlpError> {
        if lambda.len() != s.len() {
            return Err(NlpError::DimensionMismatch {
                what: "lambda vs s",
                expected: s.len(),
                got: lambda.len(),
            });
        }
        for (i, &x) in lambda.iter().enumerate() {
            if x <= T::zero() {
                return Err(NlpError::NonPositiveMultiplier {
                    index: i,
                    value: x.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        for (i, &x) in s.iter().enumerate() {
            if x <= T::zero() {
                return Err(NlpError::NonPositiveSlack {
                    index: i,
                    value: x.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(Self { u, lambda, w, s })
    }

    /// Default initialization from a primal point only:
    /// `s = max(-G(u0), 0) + 0.1`, `lambda = mu0 / s` with `mu0 = 0.1`, `w = 0`.
    ///
    /// This never requires a feasible start; it only guarantees that the
    /// slacks and multipliers begin strictly positive.
    pub fn from_primal(problem: &dyn NlpProblem<T>, u: Array1<T>) -> Self {
        let mu0 = T::of(0.1);
        let g = problem.ineq_con(u.view());
        let s: Array1<T> = g.mapv(|gi| (-gi).max(T::zero()) + T::of(0.1));
        let lambda: Array1<T> = s.mapv(|si| mu0 / si);
        let w = Array1::zeros(problem.n_eq());
        Self { u, lambda, w, s }
    }

    /// Checks dimensional consistency against `problem`.
    pub fn validate_for(&self, problem: &dyn NlpProblem<T>) -> Result<(), NlpError> {
        if self.u.len() != problem.n_vars() {
            return Err(NlpError::DimensionMismatch {
                what: "u",
                expected: problem.n_vars(),
                got: self.u.len(),
            });
        }
        if self.lambda.len() != problem.n_ineq() {
            return Err(NlpError::DimensionMismatch {
                what: "lambda",
                expected: problem.n_ineq(),
                got: self.lambda.len(),
            });
        }
        if self.w.len() != problem.n_eq() {
            return Err(NlpError::DimensionMismatch {
                what: "w",
                expected: problem.n_eq(),
                got: self.w.len(),
            });
        }
        if self.s.len() != problem.n_ineq() {
            return Err(NlpError::DimensionMismatch {
                what: "s",
                expected: problem.n_ineq(),
                got: self.s.len(),
            });
        }
        Ok(())
    }

    pub fn min_lambda(&self) -> T {
        self.lambda
            .iter()
            .fold(T::infinity(), |acc, &x| acc.min(x))
    }

    pub fn min_slack(&self) -> T {
        self.s.iter().fold(T::infinity(), |acc, &x| acc.min(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> CallbackProblem<f64> {
        // min (x-2)^2  s.t.  x - 1 <= 0
        CallbackProblem::new(
            1,
            |u: ArrayView1<'_, f64>| (u[0] - 2.0).powi(2),
            |u| array![2.0 * (u[0] - 2.0)],
            |_, _, _| array![[2.0]],
        )
        .with_ineq(1, |u| array![u[0] - 1.0], |_| array![[1.0]])
    }

    #[test]
    fn from_primal_is_strictly_positive() {
        let p = toy();
        // Start violated (x = 3 gives g = 2 > 0) and satisfied (x = 0).
        for x0 in [3.0, 0.0, 1.0] {
            let v = IterateV::from_primal(&p, array![x0]);
            assert!(v.min_slack() > 0.0);
            assert!(v.min_lambda() > 0.0);
            v.validate_for(&p).unwrap();
        }
        // Satisfied start: s = -g + 0.1 = 1.1, lambda = 0.1/1.1.
        let v = IterateV::from_primal(&p, array![0.0]);
        assert!((v.s[0] - 1.1).abs() < 1e-15);
        assert!((v.lambda[0] - 0.1 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn new_rejects_nonpositive_entries() {
        let err = IterateV::new(array![0.0], array![0.0], Array1::zeros(0), array![1.0]);
        assert!(matches!(err, Err(NlpError::NonPositiveMultiplier { .. })));
        let err = IterateV::new(array![0.0], array![1.0], Array1::zeros(0), array![-1.0]);
        assert!(matches!(err, Err(NlpError::NonPositiveSlack { .. })));
    }
}
