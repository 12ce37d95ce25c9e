//! Dense linear algebra for the Newton systems.
//!
//! `factor_solve` is a plain LU solve with partial pivoting. `solve_kkt`
//! solves the 4x4-block Newton system by first eliminating the slack and
//! multiplier blocks through their diagonal/identity couplings (exact
//! algebra, no approximation), factoring the remaining primal/equality core
//! densely, and walking a regularization schedule when the factorization
//! fails or the step is not a descent direction for the merit function.

use crate::kkt::KktJacobian;
use crate::num::{two_norm, Real};
use ndarray::{s, Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinSolveError {
    #[error("matrix is singular (pivot {pivot:e} at column {col})")]
    Singular { col: usize, pivot: f64 },
    #[error("dimension mismatch: matrix is {rows}x{cols}, rhs has length {rhs}")]
    Dimension { rows: usize, cols: usize, rhs: usize },
    #[error("regularization schedule exhausted (last delta {last_delta:e})")]
    RegularizationExhausted { last_delta: f64 },
}

/// Conditioning classification of a completed solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionFlag {
    Ok,
    IllConditioned,
    SingularRegularized,
}

/// Result of a linear solve.
///
/// Invariant: `condition_flag == Ok` implies `regularization_delta == 0`.
#[derive(Debug, Clone)]
pub struct SolveReport<T> {
    pub solution: Array1<T>,
    pub regularization_delta: T,
    pub condition_flag: ConditionFlag,
}

/// LU factors of a square matrix, `P A = L U` with partial pivoting.
pub(crate) struct LuFactors<T> {
    lu: Array2<T>,
    piv: Vec<usize>,
    min_pivot: T,
    max_pivot: T,
}

const PANEL: usize = 48;

/// Blocked right-looking LU with partial pivoting. Panels are factored
/// column-by-column; the trailing submatrix is updated with a matrix product
/// so the bulk of the work runs through the fast GEMM path.
pub(crate) fn lu_factor<T: Real>(mut a: Array2<T>) -> Result<LuFactors<T>, LinSolveError> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "lu_factor requires a square matrix");
    let mut piv = Vec::with_capacity(n);
    let scale = a.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    let tiny = T::epsilon() * T::of(n.max(1) as f64) * scale.max(T::one());
    let mut min_pivot = T::infinity();
    let mut max_pivot = T::zero();

    let mut k0 = 0;
    while k0 < n {
        let k1 = (k0 + PANEL).min(n);
        // Factor the panel columns k0..k1 (unblocked, pivoting over all rows).
        for k in k0..k1 {
            let mut p = k;
            let mut best = a[(k, k)].abs();
            for i in k + 1..n {
                let v = a[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= tiny {
                return Err(LinSolveError::Singular {
                    col: k,
                    pivot: best.to_f64().unwrap_or(0.0),
                });
            }
            if p != k {
                for j in 0..n {
                    let t = a[(k, j)];
                    a[(k, j)] = a[(p, j)];
                    a[(p, j)] = t;
                }
            }
            piv.push(p);
            let pivot = a[(k, k)];
            min_pivot = min_pivot.min(pivot.abs());
            max_pivot = max_pivot.max(pivot.abs());
            let inv = T::one() / pivot;
            for i in k + 1..n {
                a[(i, k)] = a[(i, k)] * inv;
            }
            // Update the rest of the panel only; the trailing block is done
            // with one GEMM per panel below.
            for i in k + 1..n {
                let lik = a[(i, k)];
                if lik != T::zero() {
                    for j in k + 1..k1 {
                        let u = a[(k, j)];
                        a[(i, j)] = a[(i, j)] - lik * u;
                    }
                }
            }
        }
        if k1 < n {
            // Triangular solve for U12: L11 (unit lower) \ A12, in place.
            for k in k0..k1 {
                for i in k + 1..k1 {
                    let lik = a[(i, k)];
                    if lik != T::zero() {
                        for j in k1..n {
                            let u = a[(k, j)];
                            a[(i, j)] = a[(i, j)] - lik * u;
                        }
                    }
                }
            }
            // Trailing update: A22 -= L21 * U12.
            let l21 = a.slice(s![k1..n, k0..k1]).to_owned();
            let u12 = a.slice(s![k0..k1, k1..n]).to_owned();
            let update = l21.dot(&u12);
            let mut a22 = a.slice_mut(s![k1..n, k1..n]);
            a22 -= &update;
        }
        k0 = k1;
    }

    Ok(LuFactors {
        lu: a,
        piv,
        min_pivot,
        max_pivot,
    })
}

impl<T: Real> LuFactors<T> {
    pub(crate) fn solve(&self, b: &Array1<T>) -> Array1<T> {
        let n = self.lu.nrows();
        let mut x = b.clone();
        for k in 0..n {
            x.swap(k, self.piv[k]);
        }
        // Forward substitution with unit lower factor.
        for k in 0..n {
            let xk = x[k];
            if xk != T::zero() {
                for i in k + 1..n {
                    let l = self.lu[(i, k)];
                    x[i] = x[i] - l * xk;
                }
            }
        }
        // Back substitution.
        for k in (0..n).rev() {
            let mut sum = x[k];
            for j in k + 1..n {
                sum = sum - self.lu[(k, j)] * x[j];
            }
            x[k] = sum / self.lu[(k, k)];
        }
        x
    }

    fn ill_conditioned(&self) -> bool {
        self.min_pivot < self.max_pivot * T::epsilon() * T::of(1e3)
    }
}

/// Solves a dense square system with partial pivoting.
pub fn factor_solve<T: Real>(
    a: &Array2<T>,
    b: &Array1<T>,
) -> Result<SolveReport<T>, LinSolveError> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(LinSolveError::Dimension {
            rows: a.nrows(),
            cols: a.ncols(),
            rhs: b.len(),
        });
    }
    let factors = lu_factor(a.clone())?;
    let flag = if factors.ill_conditioned() {
        ConditionFlag::IllConditioned
    } else {
        ConditionFlag::Ok
    };
    Ok(SolveReport {
        solution: factors.solve(b),
        regularization_delta: T::zero(),
        condition_flag: flag,
    })
}

struct KktBlocks<'a, T> {
    n: usize,
    m: usize,
    p: usize,
    j: &'a KktJacobian<T>,
}

impl<'a, T: Real> KktBlocks<'a, T> {
    fn new(j: &'a KktJacobian<T>) -> Self {
        Self {
            n: j.n_vars,
            m: j.n_ineq,
            p: j.n_eq,
            j,
        }
    }

    /// `s_i`, read from the complementarity row's lambda-block column.
    fn s_of(&self, i: usize) -> T {
        self.j.mat[(self.n + self.m + self.p + i, self.n + i)]
    }

    /// `lambda_i`, read from the complementarity row's s-block column.
    fn lambda_of(&self, i: usize) -> T {
        self.j.mat[(
            self.n + self.m + self.p + i,
            self.n + self.m + self.p + i,
        )]
    }
}

/// Newton-system solve with an inertia-style regularization fallback.
///
/// `rhs` must be the negated residual vector. If factorization fails or the
/// computed step satisfies `grad(phi)^T dv >= 0` (not a descent direction for
/// the squared-residual merit), the solve is retried with `delta * I` added
/// to the Lagrangian-Hessian block, walking `delta_schedule` in order.
pub fn solve_kkt<T: Real>(
    j: &KktJacobian<T>,
    rhs: &Array1<T>,
    delta_schedule: &[T],
) -> Result<SolveReport<T>, LinSolveError> {
    let order = j.order();
    if rhs.len() != order {
        return Err(LinSolveError::Dimension {
            rows: order,
            cols: order,
            rhs: rhs.len(),
        });
    }
    // A zero right-hand side has the zero step as its exact solution for any
    // regularization; it also carries no descent information.
    if rhs.iter().all(|&x| x == T::zero()) {
        return Ok(SolveReport {
            solution: Array1::zeros(order),
            regularization_delta: T::zero(),
            condition_flag: ConditionFlag::Ok,
        });
    }

    let blocks = KktBlocks::new(j);
    let (n, m, p) = (blocks.n, blocks.m, blocks.p);
    let r1 = rhs.slice(s![0..n]).to_owned();
    let r2 = rhs.slice(s![n..n + m]).to_owned();
    let r3 = rhs.slice(s![n + m..n + m + p]).to_owned();
    let r4 = rhs.slice(s![n + m + p..order]).to_owned();

    let hess = j.mat.slice(s![0..n, 0..n]);
    let g_jac = j.mat.slice(s![n..n + m, 0..n]);
    let h_jac = j.mat.slice(s![n + m..n + m + p, 0..n]);

    let mut last_delta = T::zero();
    for &delta in delta_schedule {
        last_delta = delta;

        // Condensed core: [W + G^T D G, A^T; A, 0] with D = Lambda / S.
        let core_n = n + p;
        let mut core: Array2<T> = Array2::zeros((core_n, core_n));
        core.slice_mut(s![0..n, 0..n]).assign(&hess);
        if delta > T::zero() {
            for i in 0..n {
                core[(i, i)] += delta;
            }
        }
        let mut b1 = r1.clone();
        if m > 0 {
            // d_i = lambda_i / s_i; scaled = D * G
            let mut scaled = g_jac.to_owned();
            let mut r_mix = Array1::zeros(m);
            for i in 0..m {
                let lam = blocks.lambda_of(i);
                let s_i = blocks.s_of(i);
                let d = lam / s_i;
                let mut row = scaled.row_mut(i);
                row *= d;
                // b1 -= G^T S^{-1} (r4 - Lambda r2)
                r_mix[i] = (r4[i] - lam * r2[i]) / s_i;
            }
            let gtd_g = g_jac.t().dot(&scaled);
            let mut w_block = core.slice_mut(s![0..n, 0..n]);
            w_block += &gtd_g;
            b1 = b1 - g_jac.t().dot(&r_mix);
        }
        if p > 0 {
            core.slice_mut(s![0..n, n..core_n]).assign(&h_jac.t());
            core.slice_mut(s![n..core_n, 0..n]).assign(&h_jac);
        }

        let mut b = Array1::zeros(core_n);
        b.slice_mut(s![0..n]).assign(&b1);
        if p > 0 {
            b.slice_mut(s![n..core_n]).assign(&r3);
        }

        let factors = match lu_factor(core) {
            Ok(f) => f,
            Err(_) => continue,
        };
        let ill = factors.ill_conditioned();

        // Eliminated-block back substitution, shared by the initial solve and
        // the refinement passes.
        let expand = |core_sol: &Array1<T>, y2: &Array1<T>, y4: &Array1<T>| -> Array1<T> {
            let du = core_sol.slice(s![0..n]).to_owned();
            let dw = core_sol.slice(s![n..core_n]).to_owned();
            let mut dv: Array1<T> = Array1::zeros(order);
            dv.slice_mut(s![0..n]).assign(&du);
            if p > 0 {
                dv.slice_mut(s![n + m..n + m + p]).assign(&dw);
            }
            if m > 0 {
                let g_du = g_jac.dot(&du);
                for i in 0..m {
                    let ds = y2[i] - g_du[i];
                    let lam = blocks.lambda_of(i);
                    let s_i = blocks.s_of(i);
                    dv[n + i] = (y4[i] - lam * ds) / s_i;
                    dv[n + m + p + i] = ds;
                }
            }
            dv
        };
        let condense_rhs = |y1: &Array1<T>, y3: &Array1<T>, y2: &Array1<T>, y4: &Array1<T>| {
            let mut b1 = y1.clone();
            if m > 0 {
                let mut r_mix = Array1::zeros(m);
                for i in 0..m {
                    let lam = blocks.lambda_of(i);
                    let s_i = blocks.s_of(i);
                    r_mix[i] = (y4[i] - lam * y2[i]) / s_i;
                }
                b1 = b1 - g_jac.t().dot(&r_mix);
            }
            let mut b = Array1::zeros(core_n);
            b.slice_mut(s![0..n]).assign(&b1);
            if p > 0 {
                b.slice_mut(s![n..core_n]).assign(y3);
            }
            b
        };

        let core_sol = factors.solve(&b);
        let mut dv = expand(&core_sol, &r2, &r4);

        // Backward check on the full regularized system, with a few passes of
        // iterative refinement reusing the factorization when the first
        // solve is not tight enough.
        let tol = T::of(1e-8).max(T::epsilon() * T::of(50.0))
            * (T::one() + two_norm(rhs.view()));
        let regularized_residual = |dv: &Array1<T>| -> Array1<T> {
            let mut reg_jdv = j.apply(dv);
            if delta > T::zero() {
                for i in 0..n {
                    reg_jdv[i] += delta * dv[i];
                }
            }
            rhs - &reg_jdv
        };
        let mut resid = regularized_residual(&dv);
        let mut back_err = two_norm(resid.view());
        let mut refine = 0;
        while back_err.is_finite() && back_err > tol && refine < 3 {
            let e1 = resid.slice(s![0..n]).to_owned();
            let e2 = resid.slice(s![n..n + m]).to_owned();
            let e3 = resid.slice(s![n + m..n + m + p]).to_owned();
            let e4 = resid.slice(s![n + m + p..order]).to_owned();
            let eb = condense_rhs(&e1, &e3, &e2, &e4);
            let core_corr = factors.solve(&eb);
            let corr = expand(&core_corr, &e2, &e4);
            dv = dv + corr;
            resid = regularized_residual(&dv);
            back_err = two_norm(resid.view());
            refine += 1;
        }
        if !back_err.is_finite() || back_err > tol {
            continue;
        }

        // Descent test for the merit phi = ||F||^2 with F = -rhs:
        // grad(phi)^T dv = 2 F^T J dv = -2 rhs^T (J dv).
        let slope = -T::of(2.0) * rhs.dot(&j.apply(&dv));
        if slope >= T::zero() {
            continue;
        }

        let flag = if delta > T::zero() {
            ConditionFlag::SingularRegularized
        } else if ill {
            ConditionFlag::IllConditioned
        } else {
            ConditionFlag::Ok
        };
        return Ok(SolveReport {
            solution: dv,
            regularization_delta: delta,
            condition_flag: flag,
        });
    }

    Err(LinSolveError::RegularizationExhausted {
        last_delta: last_delta.to_f64().unwrap_or(f64::NAN),
    })
}

/// Rank of a dense matrix by row echelon reduction with partial pivoting.
pub fn matrix_rank<T: Real>(a: &Array2<T>) -> usize {
    let mut m = a.clone();
    let (rows, cols) = (m.nrows(), m.ncols());
    let scale = m.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()));
    if scale == T::zero() {
        return 0;
    }
    let tol = scale * T::epsilon() * T::of((rows.max(cols)) as f64) * T::of(100.0);
    let mut rank = 0;
    let mut row = 0;
    for col in 0..cols {
        if row >= rows {
            break;
        }
        let mut p = row;
        let mut best = m[(row, col)].abs();
        for i in row + 1..rows {
            if m[(i, col)].abs() > best {
                best = m[(i, col)].abs();
                p = i;
            }
        }
        if best <= tol {
            continue;
        }
        if p != row {
            for j in 0..cols {
                let t = m[(row, j)];
                m[(row, j)] = m[(p, j)];
                m[(p, j)] = t;
            }
        }
        let pivot = m[(row, col)];
        for i in row + 1..rows {
            let f = m[(i, col)] / pivot;
            if f != T::zero() {
                for j in col..cols {
                    let v = m[(row, j)];
                    m[(i, j)] = m[(i, j)] - f * v;
                }
            }
        }
        rank += 1;
        row += 1;
    }
    rank
}

/// Orthonormal-ish basis of the nullspace of `a` (columns), computed from the
/// reduced row echelon form. Good enough for diagnostic projections.
pub fn nullspace_basis<T: Real>(a: &Array2<T>) -> Array2<T> {
    let mut m = a.clone();
    let (rows, cols) = (m.nrows(), m.ncols());
    let scale = m.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()));
    let tol = if scale == T::zero() {
        T::epsilon()
    } else {
        scale * T::epsilon() * T::of((rows.max(cols)) as f64) * T::of(100.0)
    };

    let mut pivot_cols = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        if row >= rows {
            break;
        }
        let mut p = row;
        let mut best = m[(row, col)].abs();
        for i in row + 1..rows {
            if m[(i, col)].abs() > best {
                best = m[(i, col)].abs();
                p = i;
            }
        }
        if best <= tol {
            continue;
        }
        if p != row {
            for j in 0..cols {
                let t = m[(row, j)];
                m[(row, j)] = m[(p, j)];
                m[(p, j)] = t;
            }
        }
        let pivot = m[(row, col)];
        for j in 0..cols {
            m[(row, j)] = m[(row, j)] / pivot;
        }
        for i in 0..rows {
            if i != row {
                let f = m[(i, col)];
                if f != T::zero() {
                    for j in 0..cols {
                        let v = m[(row, j)];
                        m[(i, j)] = m[(i, j)] - f * v;
                    }
                }
            }
        }
        pivot_cols.push(col);
        row += 1;
    }

    let free_cols: Vec<usize> = (0..cols).filter(|c| !pivot_cols.contains(c)).collect();
    let mut basis = Array2::zeros((cols, free_cols.len()));
    for (k, &fc) in free_cols.iter().enumerate() {
        basis[(fc, k)] = T::one();
        for (r, &pc) in pivot_cols.iter().enumerate() {
            basis[(pc, k)] = -m[(r, fc)];
        }
    }
    basis
}

/// Attempts a Cholesky factorization; returns true iff the matrix is positive
/// definite to within a small relative tolerance.
pub fn is_positive_definite<T: Real>(a: &Array2<T>) -> bool {
    let n = a.nrows();
    if n != a.ncols() {
        return false;
    }
    if n == 0 {
        return true;
    }
    let scale = a.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()));
    // Pivots must clear a small positive threshold: a semidefinite direction
    // (zero pivot) does not count as positive definite.
    let tol = scale.max(T::one()) * T::epsilon() * T::of(100.0);
    let mut l = Array2::<T>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum = sum - l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if sum <= tol {
                    return false;
                }
                l[(i, i)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    true
}
