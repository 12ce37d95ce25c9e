//! Shared random-problem generators for the solver test suites.

use forma_core::{CallbackProblem, IterateV, NlpProblem};
use ndarray::{Array1, Array2};
use rand::rngs::StdRng;
use rand::Rng;

/// Random strictly convex QP with linear constraints:
/// `min 0.5 u^T Q u + c^T u  s.t.  Ae u = be,  Ag u - d <= 0`
/// with `Q = L L^T + I` positive definite. All derivatives exact.
pub fn random_qp(rng: &mut StdRng, n: usize, m: usize, p: usize) -> CallbackProblem<f64> {
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            l[(i, j)] = rng.random_range(-1.0..1.0);
        }
    }
    let q = l.dot(&l.t()) + Array2::<f64>::eye(n);
    let c = Array1::from_iter((0..n).map(|_| rng.random_range(-1.0..1.0)));

    let ag = Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0..1.0));
    let d = Array1::from_iter((0..m).map(|_| rng.random_range(-0.5..1.5)));
    let ae = Array2::from_shape_fn((p, n), |_| rng.random_range(-1.0..1.0));
    let be = Array1::from_iter((0..p).map(|_| rng.random_range(-0.5..0.5)));

    let q_obj = q.clone();
    let c_obj = c.clone();
    let q_grad = q.clone();
    let c_grad = c;
    let q_hess = q;
    let ag_con = ag.clone();
    let d_con = d;
    let ag_jac = ag;
    let ae_con = ae.clone();
    let be_con = be;
    let ae_jac = ae;

    let mut problem = CallbackProblem::new(
        n,
        move |u: ndarray::ArrayView1<'_, f64>| {
            0.5 * u.dot(&q_obj.dot(&u.to_owned())) + c_obj.dot(&u)
        },
        move |u| q_grad.dot(&u.to_owned()) + &c_grad,
        move |_, _, _| q_hess.clone(),
    );
    if p > 0 {
        problem = problem.with_eq(
            p,
            move |u: ndarray::ArrayView1<'_, f64>| ae_con.dot(&u.to_owned()) - &be_con,
            move |_| ae_jac.clone(),
        );
    }
    if m > 0 {
        problem = problem.with_ineq(
            m,
            move |u: ndarray::ArrayView1<'_, f64>| ag_con.dot(&u.to_owned()) - &d_con,
            move |_| ag_jac.clone(),
        );
    }
    problem
}

/// Random iterate with strictly positive multipliers and slacks.
pub fn random_iterate(rng: &mut StdRng, problem: &dyn NlpProblem<f64>) -> IterateV<f64> {
    let u = Array1::from_iter((0..problem.n_vars()).map(|_| rng.random_range(-1.0..1.0)));
    let lambda = Array1::from_iter((0..problem.n_ineq()).map(|_| rng.random_range(0.05..2.0)));
    let w = Array1::from_iter((0..problem.n_eq()).map(|_| rng.random_range(-1.0..1.0)));
    let s = Array1::from_iter((0..problem.n_ineq()).map(|_| rng.random_range(0.05..2.0)));
    IterateV { u, lambda, w, s }
}
