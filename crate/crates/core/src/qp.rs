//! Strictly convex quadratic programs over polyhedra.
//!
//! Every subproblem in this crate has the form
//!
//! ```text
//!     minimize    1/2 y' H y + c' y
//!     subject to  A y <= b
//! ```
//!
//! with `H` symmetric positive definite. [`qp_solve`] runs a primal active-set
//! method (Nocedal & Wright, Alg. 16.3) from a feasible start, optionally
//! warm-started with the previous solution and its working set. The
//! equality-constrained step is obtained through the Schur complement
//! `A_W H^-1 A_W'`, with a pseudo-inverse fallback when that matrix is
//! singular. [`qp_enumerate`] is an exhaustive oracle for tiny problems.

use nalgebra::Cholesky;
use thiserror::Error;

use crate::linalg::{asymmetry, inf_norm, max_abs, sym_eigenvalues};
use crate::problem::{EquilibriumInstance, Polyhedron};
use crate::{Matrix, Vector};

/// Default KKT residual tolerance for subproblems.
pub const DEFAULT_QP_TOL: f64 = 1e-10;
/// Largest tolerance accepted by [`qp_solve`].
pub const MAX_QP_TOL: f64 = 1e-2;
/// Smallest admissible Hessian eigenvalue.
pub const MIN_HESSIAN_EIGENVALUE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("invalid QP argument: {0}")]
    Argument(String),
    #[error("Hessian is not symmetric positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotConvex { min_eigenvalue: f64 },
    #[error("constraint system is infeasible (phase 1 ended with violation {violation:e})")]
    Infeasible { violation: f64 },
    #[error(
        "active-set method stopped after {iterations} iterations with residuals \
         stationarity {:e}, feasibility {:e}, complementarity {:e}",
        best.kkt_stationarity, best.kkt_feasibility, best.kkt_complementarity
    )]
    NonConvergence {
        iterations: usize,
        best: Box<QpSolution>,
    },
}

/// `minimize 1/2 y'Hy + c'y  s.t.  A y <= b`, with `(A, b)` borrowed from a
/// polyhedron.
#[derive(Debug, Clone)]
pub struct QpProblem<'a> {
    hessian: Matrix,
    linear: Vector,
    constraints: &'a Polyhedron,
}

impl<'a> QpProblem<'a> {
    /// Checks dimensions, symmetry of `H` (relative 1e-12) and
    /// `λ_min(H) >= 1e-10`.
    pub fn new(
        hessian: Matrix,
        linear: Vector,
        constraints: &'a Polyhedron,
    ) -> Result<Self, QpError> {
        let m = constraints.dim();
        if hessian.shape() != (m, m) || linear.len() != m {
            return Err(QpError::Argument(format!(
                "Hessian {}x{} and linear term of length {} do not match dimension {m}",
                hessian.nrows(),
                hessian.ncols(),
                linear.len()
            )));
        }
        if asymmetry(&hessian) > 1e-12 * (1.0 + max_abs(&hessian)) {
            return Err(QpError::Argument("Hessian is not symmetric".into()));
        }
        let min_eigenvalue = sym_eigenvalues(&hessian)[0];
        if !(min_eigenvalue >= MIN_HESSIAN_EIGENVALUE) {
            return Err(QpError::NotConvex { min_eigenvalue });
        }
        Ok(Self {
            hessian,
            linear,
            constraints,
        })
    }

    /// Skips the eigenvalue check; for Hessians that are positive definite by
    /// construction, such as `2λQ + I`.
    pub(crate) fn new_unchecked(
        hessian: Matrix,
        linear: Vector,
        constraints: &'a Polyhedron,
    ) -> Self {
        Self {
            hessian,
            linear,
            constraints,
        }
    }

    pub fn hessian(&self) -> &Matrix {
        &self.hessian
    }

    pub fn linear(&self) -> &Vector {
        &self.linear
    }

    pub fn constraints(&self) -> &Polyhedron {
        self.constraints
    }

    pub fn objective(&self, y: &Vector) -> f64 {
        0.5 * y.dot(&(&self.hessian * y)) + self.linear.dot(y)
    }

    fn factor(&self) -> Result<Cholesky<f64, nalgebra::Dyn>, QpError> {
        Cholesky::new(self.hessian.clone()).ok_or_else(|| QpError::NotConvex {
            min_eigenvalue: sym_eigenvalues(&self.hessian)[0],
        })
    }
}

/// Minimizer with duals and KKT residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub point: Vector,
    /// One multiplier per constraint row, all nonnegative.
    pub duals: Vector,
    /// `||H y + c + A' duals||_inf`
    pub kkt_stationarity: f64,
    /// `max(0, max_i (A y - b)_i)`
    pub kkt_feasibility: f64,
    /// `max_i |duals_i (A y - b)_i|`
    pub kkt_complementarity: f64,
    pub iterations: usize,
    /// Rows in the final working set, ascending.
    pub active_set: Vec<usize>,
}

impl QpSolution {
    fn within(&self, tol: f64) -> bool {
        self.kkt_stationarity <= tol
            && self.kkt_feasibility <= tol
            && self.kkt_complementarity <= tol
    }
}

/// Feasible starting information for [`qp_solve_warm`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WarmStart {
    pub point: Option<Vector>,
    pub active_set: Vec<usize>,
}

impl WarmStart {
    pub fn from_solution(sol: &QpSolution) -> Self {
        Self {
            point: Some(sol.point.clone()),
            active_set: sol.active_set.clone(),
        }
    }
}

fn check_tol(tol: f64) -> Result<(), QpError> {
    if !(tol > 0.0 && tol <= MAX_QP_TOL) {
        return Err(QpError::Argument(format!(
            "tolerance {tol:e} outside (0, {MAX_QP_TOL:e}]"
        )));
    }
    Ok(())
}

/// Solves the QP from the polyhedron's interior point.
pub fn qp_solve(p: &QpProblem<'_>, tol: f64) -> Result<QpSolution, QpError> {
    qp_solve_warm(p, tol, None)
}

/// Solves the QP, starting from `warm` when its point is feasible.
pub fn qp_solve_warm(
    p: &QpProblem<'_>,
    tol: f64,
    warm: Option<&WarmStart>,
) -> Result<QpSolution, QpError> {
    check_tol(tol)?;
    let chol = p.factor()?;
    solve_factored(p, &chol, tol, warm)
}

fn solve_factored(
    p: &QpProblem<'_>,
    chol: &Cholesky<f64, nalgebra::Dyn>,
    tol: f64,
    warm: Option<&WarmStart>,
) -> Result<QpSolution, QpError> {
    let set = p.constraints;
    let a = set.a();
    let b = set.b();
    let start_tol = 1e-3 * tol;

    let (start, working) = match warm {
        Some(WarmStart {
            point: Some(x),
            active_set,
        }) if x.len() == set.dim() && set.max_violation(x) <= start_tol => {
            (x.clone(), active_set.clone())
        }
        _ if set.max_violation(set.interior_point()) <= start_tol => {
            (set.interior_point().clone(), Vec::new())
        }
        _ => (find_feasible_point(a, b)?, Vec::new()),
    };
    let max_iter = 50 * (set.dim() + set.rows());
    active_set(
        &p.hessian, chol, &p.linear, a, b, start, working, tol, max_iter,
    )
}

/// Keeps rows of `candidates` that are active at `x` and linearly
/// independent of the rows kept before them.
fn filter_working_set(a: &Matrix, b: &Vector, x: &Vector, candidates: &[usize]) -> Vec<usize> {
    let mut basis: Vec<Vector> = Vec::new();
    let mut kept = Vec::new();
    let mut seen = vec![false; a.nrows()];
    for &i in candidates {
        if i >= a.nrows() || seen[i] {
            continue;
        }
        seen[i] = true;
        let row: Vector = a.row(i).transpose();
        let scale = 1.0 + b[i].abs() + row.abs().dot(&x.abs());
        if (row.dot(x) - b[i]).abs() > 1e-9 * scale {
            continue;
        }
        let mut r = row.clone();
        for q in &basis {
            let c = q.dot(&r);
            r -= q * c;
        }
        let n = r.norm();
        if n > 1e-8 * row.norm() {
            basis.push(r / n);
            kept.push(i);
        }
    }
    kept
}

/// Solves `S v = rhs` for the small symmetric PSD Schur matrix, falling back
/// to a pseudo-inverse when `S` is singular.
fn schur_solve(s: Matrix, rhs: &Vector) -> Vector {
    if let Some(ch) = Cholesky::new(s.clone()) {
        let v = ch.solve(rhs);
        if v.iter().all(|x| x.is_finite()) {
            return v;
        }
    }
    let svd = s.svd(true, true);
    svd.solve(rhs, 1e-12)
        .unwrap_or_else(|_| Vector::zeros(rhs.len()))
}

/// Least-norm correction `x += A_W' (A_W A_W')^-1 (b_W - A_W x)` so the
/// working constraints hold with equality; long steps otherwise leave
/// cancellation error on the hyperplane just reached.
fn snap_to_working_set(a: &Matrix, b: &Vector, w: &[usize], x: &mut Vector) {
    let k = w.len();
    let aw = Matrix::from_fn(k, x.len(), |r, j| a[(w[r], j)]);
    let residual = Vector::from_iterator(k, w.iter().map(|&i| b[i])) - &aw * &*x;
    let gram = &aw * aw.transpose();
    let coef = schur_solve(gram, &residual);
    *x += aw.transpose() * coef;
}

#[allow(clippy::too_many_arguments)]
fn active_set(
    h: &Matrix,
    chol: &Cholesky<f64, nalgebra::Dyn>,
    c: &Vector,
    a: &Matrix,
    b: &Vector,
    mut x: Vector,
    working: Vec<usize>,
    tol: f64,
    max_iter: usize,
) -> Result<QpSolution, QpError> {
    let l = a.nrows();
    let row_norm_max = (0..l).map(|i| a.row(i).norm()).fold(0.0_f64, f64::max);
    let dual_tol = 1e-3 * tol / (1.0 + row_norm_max);
    let mut w = filter_working_set(a, b, &x, &working);
    let mut multipliers = Vector::zeros(0);
    let mut full_step_taken = false;
    let mut iterations = 0;
    let mut optimal = false;

    while iterations < max_iter {
        iterations += 1;
        let g = h * &x + c;
        let hg = chol.solve(&g);
        let k = w.len();
        let (step, lambda) = if k == 0 {
            (-hg, Vector::zeros(0))
        } else {
            let aw = Matrix::from_fn(k, x.len(), |r, j| a[(w[r], j)]);
            let y = chol.solve(&aw.transpose());
            let s = &aw * &y;
            let lambda = schur_solve(s, &(-(&aw * &hg)));
            (-hg - y * &lambda, lambda)
        };

        let step_norm = inf_norm(&step);
        if step_norm <= 1e-12 * (1.0 + inf_norm(&x)) || full_step_taken {
            // x minimizes the objective on the current working face.
            full_step_taken = false;
            let mut most_negative: Option<(usize, f64)> = None;
            for (pos, &mu) in lambda.iter().enumerate() {
                if mu < -dual_tol && most_negative.is_none_or(|(_, best)| mu < best) {
                    most_negative = Some((pos, mu));
                }
            }
            match most_negative {
                None => {
                    multipliers = lambda;
                    optimal = true;
                    break;
                }
                Some((pos, _)) => {
                    w.remove(pos);
                    continue;
                }
            }
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        let step_len = step.norm();
        for i in 0..l {
            if w.contains(&i) {
                continue;
            }
            let row = a.row(i);
            let ap = row.dot(&step.transpose());
            if ap <= 1e-14 * row.norm() * step_len {
                continue;
            }
            let ratio = ((b[i] - row.dot(&x.transpose())) / ap).max(0.0);
            if ratio < alpha {
                alpha = ratio;
                blocking = Some(i);
            }
        }
        x += &step * alpha;
        match blocking {
            Some(i) => {
                w.push(i);
                w.sort_unstable();
            }
            None => full_step_taken = true,
        }
        if !w.is_empty() {
            snap_to_working_set(a, b, &w, &mut x);
        }
    }

    let mut duals = Vector::zeros(l);
    if optimal {
        for (pos, &i) in w.iter().enumerate() {
            duals[i] = multipliers[pos].max(0.0);
        }
    }
    let sol = kkt_summary(h, c, a, b, x, duals, iterations, w);
    if optimal && sol.within(tol) {
        Ok(sol)
    } else {
        Err(QpError::NonConvergence {
            iterations,
            best: Box::new(sol),
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn kkt_summary(
    h: &Matrix,
    c: &Vector,
    a: &Matrix,
    b: &Vector,
    point: Vector,
    duals: Vector,
    iterations: usize,
    active_set: Vec<usize>,
) -> QpSolution {
    let stationarity = inf_norm(&(h * &point + c + a.transpose() * &duals));
    let slack = a * &point - b;
    let feasibility = slack.iter().fold(0.0_f64, |acc, v| acc.max(*v));
    let complementarity = slack
        .iter()
        .zip(duals.iter())
        .fold(0.0_f64, |acc, (s, d)| acc.max((s * d).abs()));
    QpSolution {
        point,
        duals,
        kkt_stationarity: stationarity,
        kkt_feasibility: feasibility,
        kkt_complementarity: complementarity,
        iterations,
        active_set,
    }
}

/// Phase 1: finds a point of `{x : A x <= b}`, preferring one with positive
/// margin. Solves
///
/// ```text
///     minimize    eps/2 (||x||^2 + s^2) - s
///     subject to  a_i x + ||a_i|| s <= b_i,   s <= 1
/// ```
///
/// from the trivially feasible start `x = 0`, `s = min(1, min_i b_i/||a_i||)`.
/// A negative optimal margin means the system is infeasible.
pub(crate) fn find_feasible_point(a: &Matrix, b: &Vector) -> Result<Vector, QpError> {
    const EPS: f64 = 1e-6;
    let (l, m) = a.shape();
    let norms: Vec<f64> = (0..l).map(|i| a.row(i).norm()).collect();
    let mut ext_a = Matrix::zeros(l + 1, m + 1);
    let mut ext_b = Vector::zeros(l + 1);
    let mut s0 = 1.0_f64;
    for i in 0..l {
        if norms[i] == 0.0 {
            if b[i] < 0.0 {
                return Err(QpError::Infeasible { violation: -b[i] });
            }
            ext_b[i] = b[i].max(0.0) + 1.0;
            continue;
        }
        ext_a.view_mut((i, 0), (1, m)).copy_from(&a.row(i));
        ext_a[(i, m)] = norms[i];
        ext_b[i] = b[i];
        s0 = s0.min(b[i] / norms[i]);
    }
    ext_a[(l, m)] = 1.0;
    ext_b[l] = 1.0;
    let mut h = Matrix::identity(m + 1, m + 1) * EPS;
    h[(m, m)] = EPS;
    let mut c = Vector::zeros(m + 1);
    c[m] = -1.0;
    let mut start = Vector::zeros(m + 1);
    start[m] = s0;
    let chol = Cholesky::new(h.clone()).expect("diagonal positive Hessian");
    let max_iter = 50 * (m + l + 2);
    let sol = match active_set(
        &h,
        &chol,
        &c,
        &ext_a,
        &ext_b,
        start,
        Vec::new(),
        1e-9,
        max_iter,
    ) {
        Ok(sol) => sol,
        Err(QpError::NonConvergence { best, .. }) => *best,
        Err(e) => return Err(e),
    };
    let x = sol.point.rows(0, m).into_owned();
    let violation = (a * &x - b).iter().fold(0.0_f64, |acc, v| acc.max(*v));
    if sol.point[m] < -1e-9 || violation > 1e-9 * (1.0 + inf_norm(b)) {
        return Err(QpError::Infeasible {
            violation: violation.max(-sol.point[m]),
        });
    }
    Ok(x)
}

/// Exhaustive active-set enumeration for tiny problems (`m <= 6`, `l <= 12`).
///
/// Every subset of rows with full row rank yields an equality-constrained KKT
/// system; feasible candidates with nonnegative multipliers are compared by
/// objective value.
pub fn qp_enumerate(p: &QpProblem<'_>) -> Result<QpSolution, QpError> {
    let set = p.constraints;
    let (l, m) = set.a().shape();
    if m > 6 || l > 12 {
        return Err(QpError::Argument(format!(
            "enumeration limited to m <= 6 and l <= 12 (got m = {m}, l = {l})"
        )));
    }
    let a = set.a();
    let b = set.b();
    let mut best: Option<(f64, Vector, Vector, Vec<usize>)> = None;
    let mut examined = 0;
    for mask in 0u32..(1u32 << l) {
        let rows: Vec<usize> = (0..l).filter(|i| mask & (1 << i) != 0).collect();
        let k = rows.len();
        if k > m {
            continue;
        }
        examined += 1;
        let aw = Matrix::from_fn(k, m, |r, j| a[(rows[r], j)]);
        if k > 0 {
            let sv = aw.clone().svd(false, false).singular_values;
            let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| {
                (lo.min(*v), hi.max(*v))
            });
            if lo <= 1e-10 * hi {
                continue;
            }
        }
        let mut kkt = Matrix::zeros(m + k, m + k);
        kkt.view_mut((0, 0), (m, m)).copy_from(&p.hessian);
        kkt.view_mut((0, m), (m, k)).copy_from(&aw.transpose());
        kkt.view_mut((m, 0), (k, m)).copy_from(&aw);
        let mut rhs = Vector::zeros(m + k);
        rhs.rows_mut(0, m).copy_from(&(-&p.linear));
        for (r, &i) in rows.iter().enumerate() {
            rhs[m + r] = b[i];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        let y = sol.rows(0, m).into_owned();
        let mu = sol.rows(m, k).into_owned();
        let feasible = (a * &y - b)
            .iter()
            .enumerate()
            .all(|(i, v)| *v <= 1e-9 * (1.0 + b[i].abs()));
        if !feasible || mu.iter().any(|v| *v < -1e-9) {
            continue;
        }
        let obj = p.objective(&y);
        if best.as_ref().is_none_or(|(o, ..)| obj < *o) {
            let mut duals = Vector::zeros(l);
            for (r, &i) in rows.iter().enumerate() {
                duals[i] = mu[r].max(0.0);
            }
            best = Some((obj, y, duals, rows));
        }
    }
    let (_, point, duals, active) = best.ok_or(QpError::Infeasible {
        violation: f64::NAN,
    })?;
    Ok(kkt_summary(
        &p.hessian, &p.linear, a, b, point, duals, examined, active,
    ))
}

/// Euclidean projection onto the polyhedron: `H = I`, `c = -z`.
pub fn project(set: &Polyhedron, z: &Vector, tol: f64) -> Result<Vector, QpError> {
    if z.len() != set.dim() {
        return Err(QpError::Argument(format!(
            "point has length {}, expected {}",
            z.len(),
            set.dim()
        )));
    }
    let m = set.dim();
    let p = QpProblem::new_unchecked(Matrix::identity(m, m), -z, set);
    // Start from z itself when it is already feasible.
    let warm = WarmStart {
        point: Some(z.clone()),
        active_set: Vec::new(),
    };
    Ok(qp_solve_warm(&p, tol, Some(&warm))?.point)
}

/// Hessian `2λQ + I` of the proximal subproblem.
fn prox_hessian(inst: &EquilibriumInstance, lambda: f64) -> Matrix {
    let q = inst.q_matrix();
    let m = inst.dim();
    (q + q.transpose()) * lambda + Matrix::identity(m, m)
}

/// Linear term `λ(P x - Q x + q) - z` of the proximal subproblem.
fn prox_linear(inst: &EquilibriumInstance, x: &Vector, z: &Vector, lambda: f64) -> Vector {
    (inst.p() * x - inst.q_matrix() * x + inst.q_vector()) * lambda - z
}

fn check_prox_args(
    inst: &EquilibriumInstance,
    x: &Vector,
    z: &Vector,
    lambda: f64,
) -> Result<(), QpError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(QpError::Argument(format!(
            "prox parameter must be positive, got {lambda}"
        )));
    }
    let m = inst.dim();
    if x.len() != m || z.len() != m {
        return Err(QpError::Argument(format!(
            "prox arguments have lengths {} and {}, expected {m}",
            x.len(),
            z.len()
        )));
    }
    Ok(())
}

/// `prox_{λ f(x,·)}(z) = argmin { λ f(x, y) + 1/2 ||y - z||^2 : y ∈ C }`.
pub fn prox_step(
    inst: &EquilibriumInstance,
    x: &Vector,
    z: &Vector,
    lambda: f64,
    tol: f64,
) -> Result<Vector, QpError> {
    check_prox_args(inst, x, z, lambda)?;
    let p = QpProblem::new_unchecked(
        prox_hessian(inst, lambda),
        prox_linear(inst, x, z, lambda),
        inst.feasible(),
    );
    Ok(qp_solve(&p, tol)?.point)
}

/// Reusable state for repeated prox and projection calls within one solver
/// run: Cholesky factors keyed by `λ` and the last solution as warm start.
#[derive(Debug)]
pub struct ProxWorkspace {
    factors: Vec<(u64, Cholesky<f64, nalgebra::Dyn>)>,
    identity: Option<Cholesky<f64, nalgebra::Dyn>>,
    warm: WarmStart,
    tol: f64,
}

const FACTOR_CACHE: usize = 4;

impl ProxWorkspace {
    pub fn new(tol: f64) -> Result<Self, QpError> {
        check_tol(tol)?;
        Ok(Self {
            factors: Vec::new(),
            identity: None,
            warm: WarmStart::default(),
            tol,
        })
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    fn factor_for(
        &mut self,
        h: &Matrix,
        lambda: f64,
    ) -> Result<Cholesky<f64, nalgebra::Dyn>, QpError> {
        let key = lambda.to_bits();
        if let Some((_, f)) = self.factors.iter().find(|(k, _)| *k == key) {
            return Ok(f.clone());
        }
        let f = Cholesky::new(h.clone()).ok_or_else(|| QpError::NotConvex {
            min_eigenvalue: sym_eigenvalues(h)[0],
        })?;
        if self.factors.len() == FACTOR_CACHE {
            self.factors.remove(0);
        }
        self.factors.push((key, f.clone()));
        Ok(f)
    }

    /// Same result as [`prox_step`], reusing cached factors and warm starts.
    pub fn prox(
        &mut self,
        inst: &EquilibriumInstance,
        x: &Vector,
        z: &Vector,
        lambda: f64,
    ) -> Result<Vector, QpError> {
        check_prox_args(inst, x, z, lambda)?;
        let h = prox_hessian(inst, lambda);
        let chol = self.factor_for(&h, lambda)?;
        let p = QpProblem::new_unchecked(h, prox_linear(inst, x, z, lambda), inst.feasible());
        let sol = solve_factored(&p, &chol, self.tol, Some(&self.warm))?;
        self.warm = WarmStart::from_solution(&sol);
        Ok(sol.point)
    }

    pub fn project(&mut self, set: &Polyhedron, z: &Vector) -> Result<Vector, QpError> {
        let m = set.dim();
        if z.len() != m {
            return Err(QpError::Argument(format!(
                "point has length {}, expected {m}",
                z.len()
            )));
        }
        let chol = match &self.identity {
            Some(c) if c.l_dirty().nrows() == m => c.clone(),
            _ => {
                let c =
                    Cholesky::new(Matrix::identity(m, m)).expect("identity is positive definite");
                self.identity = Some(c.clone());
                c
            }
        };
        let p = QpProblem::new_unchecked(Matrix::identity(m, m), -z, set);
        let warm = if set.max_violation(z) <= 1e-3 * self.tol {
            WarmStart {
                point: Some(z.clone()),
                active_set: Vec::new(),
            }
        } else {
            self.warm.clone()
        };
        let sol = solve_factored(&p, &chol, self.tol, Some(&warm))?;
        self.warm = WarmStart::from_solution(&sol);
        Ok(sol.point)
    }

    /// Forgets the warm start (factors stay valid for the same instance).
    pub fn reset_warm_start(&mut self) {
        self.warm = WarmStart::default();
    }
}
