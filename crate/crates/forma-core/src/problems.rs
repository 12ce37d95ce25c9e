//! Small built-in problems with hand-derived optimality conditions.
//!
//! Each problem carries its analytic solution so solver tests can assert
//! primal error and multiplier values, not just convergence flags.

use crate::nlp::CallbackProblem;
use crate::num::Real;
use ndarray::{array, Array1, Array2, ArrayView1};

/// A named problem with its analytic solution.
pub struct OracleProblem<T: Real> {
    pub name: &'static str,
    pub problem: CallbackProblem<T>,
    pub start: Array1<T>,
    pub u_star: Array1<T>,
    /// Optimal inequality multipliers, where known.
    pub lambda_star: Option<Array1<T>>,
    /// Optimal equality multipliers, where known.
    pub w_star: Option<Array1<T>>,
}

/// `min (u - 5)^2`; unconstrained, one exact Newton step from any start.
pub fn unconstrained<T: Real>() -> OracleProblem<T> {
    let problem = CallbackProblem::new(
        1,
        |u: ArrayView1<'_, T>| (u[0] - T::of(5.0)) * (u[0] - T::of(5.0)),
        |u| array![T::of(2.0) * (u[0] - T::of(5.0))],
        |_, _, _| array![[T::of(2.0)]],
    );
    OracleProblem {
        name: "unconstrained",
        problem,
        start: array![T::of(-3.0)],
        u_star: array![T::of(5.0)],
        lambda_star: None,
        w_star: None,
    }
}

/// `min (x - 2)^2  s.t.  x - 1 <= 0`.
///
/// Stationarity `2(x - 2) + lambda = 0` at the active bound `x = 1` gives
/// `lambda = 2`.
pub fn qp_ineq<T: Real>() -> OracleProblem<T> {
    let problem = CallbackProblem::new(
        1,
        |u: ArrayView1<'_, T>| (u[0] - T::of(2.0)) * (u[0] - T::of(2.0)),
        |u| array![T::of(2.0) * (u[0] - T::of(2.0))],
        |_, _, _| array![[T::of(2.0)]],
    )
    .with_ineq(
        1,
        |u: ArrayView1<'_, T>| array![u[0] - T::one()],
        |_| array![[T::one()]],
    );
    OracleProblem {
        name: "qp-ineq",
        problem,
        start: array![T::zero()],
        u_star: array![T::one()],
        lambda_star: Some(array![T::of(2.0)]),
        w_star: None,
    }
}

/// `min x^2 + y^2  s.t.  x + y - 2 = 0`; solution `(1, 1)` with `w = -2`.
pub fn eq_only<T: Real>() -> OracleProblem<T> {
    let problem = CallbackProblem::new(
        2,
        |u: ArrayView1<'_, T>| u[0] * u[0] + u[1] * u[1],
        |u| array![T::of(2.0) * u[0], T::of(2.0) * u[1]],
        |_, _, _| {
            array![
                [T::of(2.0), T::zero()],
                [T::zero(), T::of(2.0)]
            ]
        },
    )
    .with_eq(
        1,
        |u: ArrayView1<'_, T>| array![u[0] + u[1] - T::of(2.0)],
        |_| array![[T::one(), T::one()]],
    );
    OracleProblem {
        name: "eq-only",
        problem,
        start: array![T::zero(), T::zero()],
        u_star: array![T::one(), T::one()],
        lambda_star: None,
        w_star: Some(array![T::of(-2.0)]),
    }
}

/// `min (x+1)^2 + (y+1)^2  s.t.  x >= 0, y >= 0`.
///
/// Both constraints active at the origin; per-coordinate stationarity
/// `2(x + 1) - lambda = 0` gives `lambda = (2, 2)`.
pub fn nonneg_2d<T: Real>() -> OracleProblem<T> {
    let problem = CallbackProblem::new(
        2,
        |u: ArrayView1<'_, T>| {
            (u[0] + T::one()) * (u[0] + T::one()) + (u[1] + T::one()) * (u[1] + T::one())
        },
        |u| array![
            T::of(2.0) * (u[0] + T::one()),
            T::of(2.0) * (u[1] + T::one())
        ],
        |_, _, _| {
            array![
                [T::of(2.0), T::zero()],
                [T::zero(), T::of(2.0)]
            ]
        },
    )
    .with_ineq(
        2,
        |u: ArrayView1<'_, T>| array![-u[0], -u[1]],
        |_| array![[-T::one(), T::zero()], [T::zero(), -T::one()]],
    );
    OracleProblem {
        name: "nonneg-2d",
        problem,
        start: array![T::one(), T::of(2.0)],
        u_star: array![T::zero(), T::zero()],
        lambda_star: Some(array![T::of(2.0), T::of(2.0)]),
        w_star: None,
    }
}

/// `min (x - 1)^2  s.t.  x - 5 <= 0`; the constraint is inactive at `x = 1`,
/// so `lambda = 0` and `s = 4`.
pub fn inactive_ineq<T: Real>() -> OracleProblem<T> {
    let problem = CallbackProblem::new(
        1,
        |u: ArrayView1<'_, T>| (u[0] - T::one()) * (u[0] - T::one()),
        |u| array![T::of(2.0) * (u[0] - T::one())],
        |_, _, _| array![[T::of(2.0)]],
    )
    .with_ineq(
        1,
        |u: ArrayView1<'_, T>| array![u[0] - T::of(5.0)],
        |_| array![[T::one()]],
    );
    OracleProblem {
        name: "inactive",
        problem,
        start: array![T::of(4.0)],
        u_star: array![T::one()],
        lambda_star: Some(array![T::zero()]),
        w_star: None,
    }
}

/// `min x^2 + y^2 + z^2  s.t.  x + y + z = 3, x <= 0.5`.
///
/// With the bound active, `y = z = 1.25` from symmetry, `w = -2.5`, and
/// `lambda = 1.5`.
pub fn mixed<T: Real>() -> OracleProblem<T> {
    let problem = CallbackProblem::new(
        3,
        |u: ArrayView1<'_, T>| u[0] * u[0] + u[1] * u[1] + u[2] * u[2],
        |u| array![
            T::of(2.0) * u[0],
            T::of(2.0) * u[1],
            T::of(2.0) * u[2]
        ],
        |_, _, _| Array2::eye(3) * T::of(2.0),
    )
    .with_eq(
        1,
        |u: ArrayView1<'_, T>| array![u[0] + u[1] + u[2] - T::of(3.0)],
        |_| array![[T::one(), T::one(), T::one()]],
    )
    .with_ineq(
        1,
        |u: ArrayView1<'_, T>| array![u[0] - T::of(0.5)],
        |_| array![[T::one(), T::zero(), T::zero()]],
    );
    OracleProblem {
        name: "mixed",
        problem,
        start: array![T::zero(), T::zero(), T::zero()],
        u_star: array![T::of(0.5), T::of(1.25), T::of(1.25)],
        lambda_star: Some(array![T::of(1.5)]),
        w_star: Some(array![T::of(-2.5)]),
    }
}

/// `min (x - 2)^2 + y^2  s.t.  x^2 + y^2 <= 1`.
///
/// A genuinely nonlinear inequality: the solution sits on the circle at
/// `(1, 0)` with `lambda = 1` from `-2 + 2 lambda = 0`; the exact Lagrangian
/// Hessian carries the constraint curvature `2 lambda I`.
pub fn circle_ineq<T: Real>() -> OracleProblem<T> {
    let problem = CallbackProblem::new(
        2,
        |u: ArrayView1<'_, T>| (u[0] - T::of(2.0)) * (u[0] - T::of(2.0)) + u[1] * u[1],
        |u| array![T::of(2.0) * (u[0] - T::of(2.0)), T::of(2.0) * u[1]],
        |_, lambda: ArrayView1<'_, T>, _| {
            let two = T::of(2.0);
            let diag = two + two * lambda[0];
            array![[diag, T::zero()], [T::zero(), diag]]
        },
    )
    .with_ineq(
        1,
        |u: ArrayView1<'_, T>| array![u[0] * u[0] + u[1] * u[1] - T::one()],
        |u| array![[T::of(2.0) * u[0], T::of(2.0) * u[1]]],
    );
    OracleProblem {
        name: "circle",
        problem,
        start: array![T::of(0.1), T::of(0.1)],
        u_star: array![T::one(), T::zero()],
        lambda_star: Some(array![T::one()]),
        w_star: None,
    }
}

/// All built-in problems in a fixed order.
pub fn all_oracles<T: Real>() -> Vec<OracleProblem<T>> {
    vec![
        unconstrained(),
        qp_ineq(),
        eq_only(),
        nonneg_2d(),
        inactive_ineq(),
        mixed(),
        circle_ineq(),
    ]
}

/// Looks up a built-in problem by its CLI name.
pub fn by_name<T: Real>(name: &str) -> Option<OracleProblem<T>> {
    all_oracles().into_iter().find(|p| p.name == name)
}

/// Names accepted by [`by_name`].
pub fn names() -> Vec<&'static str> {
    all_oracles::<f64>().iter().map(|p| p.name).collect()
}
