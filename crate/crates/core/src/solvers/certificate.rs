use crate::linalg::sym_eigenvalues;
use crate::problem::{EquilibriumInstance, ProblemError};
use crate::qp::{self, QpError, QpProblem, DEFAULT_QP_TOL};
use crate::{Matrix, Vector};

use super::SolverError;

/// `D(x) = ||x - prox_{λ f(x,·)}(x)||²`, zero exactly at solutions.
pub fn residual_d(inst: &EquilibriumInstance, x: &Vector, lambda: f64) -> Result<f64, SolverError> {
    let y = qp::prox_step(inst, x, x, lambda, DEFAULT_QP_TOL)?;
    Ok((x - y).norm_squared())
}

/// `min_{y ∈ C} f(x, y)`; a value `>= -tol` certifies `x` as an approximate
/// solution of the equilibrium problem.
///
/// The inner problem has Hessian `2Q`, which is only semidefinite, so it is
/// regularized by `1e-10 I` (plus whatever is needed to absorb a slightly
/// negative eigenvalue within the validator's tolerance).
pub fn solution_certificate(
    inst: &EquilibriumInstance,
    x: &Vector,
    tol: f64,
) -> Result<f64, SolverError> {
    let m = inst.dim();
    if x.len() != m {
        return Err(ProblemError::Dimension {
            what: "x",
            expected: m,
            found: x.len(),
        }
        .into());
    }
    let violation = inst.feasible().max_violation(x);
    if violation > tol {
        return Err(ProblemError::Argument(format!(
            "certificate point violates the constraints by {violation:e} > {tol:e}"
        ))
        .into());
    }
    let q = inst.q_matrix();
    let two_q = q + q.transpose();
    let shift = 1e-10 + (-sym_eigenvalues(&two_q)[0]).max(0.0);
    let hessian = two_q + Matrix::identity(m, m) * shift;
    let linear = inst.p() * x - q * x + inst.q_vector();
    let problem = QpProblem::new_unchecked(hessian, linear, inst.feasible());
    let y = match qp::qp_solve(&problem, DEFAULT_QP_TOL) {
        Ok(sol) => sol.point,
        // Ill-conditioned inner problems: accept the best feasible iterate.
        Err(QpError::NonConvergence { best, .. }) if best.kkt_feasibility <= tol => best.point,
        Err(e) => return Err(e.into()),
    };
    Ok(inst.eval_unchecked(x, &y))
}
