//! Random and model-based instance construction.
//!
//! [`generate`] draws `Q = U₂ diag(λ₂) U₂'` (PSD) and `T = U₁ diag(λ₁) U₁'`
//! (NSD) with Haar-random orthogonal `U₁, U₂`, sets `P = Q - T`, and builds a
//! random polyhedron that strictly contains `x₀ = (1, …, 1)`.
//!
//! [`nash_cournot_assemble`] reduces an oligopoly with affine inverse demand
//! and affine costs to the same quadratic-affine form.

use nalgebra::QR;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::symmetrize;
use crate::problem::{EquilibriumInstance, Polyhedron, ProblemError};
use crate::{Matrix, Vector};

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid generator spec: {0}")]
    Argument(String),
    #[error("invalid oligopoly model: {0}")]
    Model(String),
    #[error("generated instance failed validation: {0}")]
    Internal(#[from] ProblemError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub dim: usize,
    pub constraint_count: usize,
    pub seed: u64,
    pub q_range: [f64; 2],
    /// Interval for the eigenvalues of `T` (so `P - Q = -T`).
    pub spectrum_neg: [f64; 2],
    /// Interval for the eigenvalues of `Q`.
    pub spectrum_pos: [f64; 2],
    pub strongly_monotone: bool,
    /// Lower bound on `λ_min(P - Q)` when `strongly_monotone` is set.
    pub strong_gap: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            dim: 20,
            constraint_count: 10,
            seed: 0,
            q_range: [-2.0, 2.0],
            spectrum_neg: [-2.0, 0.0],
            spectrum_pos: [0.0, 2.0],
            strongly_monotone: false,
            strong_gap: 0.1,
        }
    }
}

impl GeneratorSpec {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            ..Self::default()
        }
    }

    pub fn strong(dim: usize, seed: u64, gap: f64) -> Self {
        Self {
            dim,
            seed,
            strongly_monotone: true,
            strong_gap: gap,
            ..Self::default()
        }
    }

    /// Negative-spectrum interval actually sampled: capped at `-strong_gap`
    /// under the strong flag.
    pub fn effective_spectrum_neg(&self) -> [f64; 2] {
        let [lo, hi] = self.spectrum_neg;
        if self.strongly_monotone {
            [lo, hi.min(-self.strong_gap)]
        } else {
            [lo, hi]
        }
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |msg: String| Err(GeneratorError::Argument(msg));
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if self.constraint_count == 0 {
            return bad("constraint_count must be positive".into());
        }
        for (name, [lo, hi]) in [
            ("q_range", self.q_range),
            ("spectrum_neg", self.spectrum_neg),
            ("spectrum_pos", self.spectrum_pos),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{name} = [{lo}, {hi}] is not a finite interval"));
            }
        }
        if self.spectrum_neg[1] > 0.0 {
            return bad(format!(
                "spectrum_neg must lie in (-inf, 0], got upper end {}",
                self.spectrum_neg[1]
            ));
        }
        if self.spectrum_pos[0] < 0.0 {
            return bad(format!(
                "spectrum_pos must lie in [0, inf), got lower end {}",
                self.spectrum_pos[0]
            ));
        }
        if self.strongly_monotone {
            if !(self.strong_gap > 0.0) {
                return bad(format!(
                    "strong_gap must be positive, got {}",
                    self.strong_gap
                ));
            }
            if self.spectrum_neg[0] > -self.strong_gap {
                return bad(format!(
                    "spectrum_neg lower end {} leaves no room below -strong_gap = {}",
                    self.spectrum_neg[0], -self.strong_gap
                ));
            }
        }
        Ok(())
    }
}

fn uniform<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}

fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    // Fill row by row so the draw order does not depend on storage layout.
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// columns of `Q` flipped so that `diag(R) > 0`.
fn random_orthogonal<R: Rng>(rng: &mut R, m: usize) -> Result<Matrix, GeneratorError> {
    let qr = QR::new(gaussian_matrix(rng, m, m));
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..m {
        if r[(j, j)] == 0.0 {
            return Err(GeneratorError::Argument(
                "singular Gaussian sample in orthogonalization".into(),
            ));
        }
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

fn conjugate(u: &Matrix, eigenvalues: &[f64]) -> Matrix {
    let d = Matrix::from_diagonal(&Vector::from_column_slice(eigenvalues));
    symmetrize(&(u * d * u.transpose()))
}

/// Seeded random instance; identical specs give bit-identical instances.
pub fn generate(spec: &GeneratorSpec) -> Result<EquilibriumInstance, GeneratorError> {
    spec.validate()?;
    let m = spec.dim;
    let l = spec.constraint_count;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let neg = spec.effective_spectrum_neg();
    let lambda_neg: Vec<f64> = (0..m).map(|_| uniform(&mut rng, neg)).collect();
    let lambda_pos: Vec<f64> = (0..m)
        .map(|_| uniform(&mut rng, spec.spectrum_pos))
        .collect();
    let u1 = random_orthogonal(&mut rng, m)?;
    let u2 = random_orthogonal(&mut rng, m)?;
    let q_mat = conjugate(&u2, &lambda_pos);
    let t = conjugate(&u1, &lambda_neg);
    let p = &q_mat - &t;
    let q_vec = Vector::from_iterator(m, (0..m).map(|_| uniform(&mut rng, spec.q_range)));

    let a = gaussian_matrix(&mut rng, l, m);
    let x0 = Vector::from_element(m, 1.0);
    let margin = Vector::from_iterator(
        l,
        (0..l).map(|_| rng.sample::<f64, _>(StandardNormal).abs()),
    );
    let b = &a * &x0 + margin;
    let feasible = Polyhedron::new(a, b, x0)?;
    Ok(EquilibriumInstance::new(p, q_mat, q_vec, feasible)?)
}

/// Oligopoly with inverse demand `p_j(s) = α_j - β_j s`, `s = Σ x_j`, cost
/// `c_j(x_j) = slope_j x_j + intercept_j` and strategy boxes `bounds[j]`.
///
/// Firm `j`'s profit is divided by `β_j` (which leaves its best response
/// unchanged), giving the monotone operator `F(x) = (1 1' + I) x + q` with
/// `q_j = (slope_j - α_j) / β_j`. The bifunction is represented with
/// `Q = I/2` and `P = 1 1' + I/2`, so `P + Q` reproduces `F` and
/// `Q - P = -1 1'` is symmetric negative semidefinite. Intercepts shift
/// profits by constants and do not enter `f`.
pub fn nash_cournot_assemble(
    alpha: &[f64],
    beta: &[f64],
    cost_slope: &[f64],
    cost_intercept: &[f64],
    bounds: &[(f64, f64)],
) -> Result<EquilibriumInstance, GeneratorError> {
    let m = alpha.len();
    if m == 0 {
        return Err(GeneratorError::Model(
            "at least one firm is required".into(),
        ));
    }
    for (name, len) in [
        ("beta", beta.len()),
        ("cost_slope", cost_slope.len()),
        ("cost_intercept", cost_intercept.len()),
        ("bounds", bounds.len()),
    ] {
        if len != m {
            return Err(GeneratorError::Model(format!(
                "{name} has {len} entries for {m} firms"
            )));
        }
    }
    if let Some(j) = (0..m).find(|&j| !(beta[j] > 0.0 && beta[j].is_finite())) {
        return Err(GeneratorError::Model(format!(
            "beta[{j}] = {} must be positive",
            beta[j]
        )));
    }
    if let Some(j) = (0..m).find(|&j| !(cost_slope[j] >= 0.0)) {
        return Err(GeneratorError::Model(format!(
            "cost_slope[{j}] = {} must be nonnegative (increasing cost)",
            cost_slope[j]
        )));
    }
    if alpha.iter().chain(cost_intercept).any(|v| !v.is_finite()) {
        return Err(GeneratorError::Model(
            "alpha and cost_intercept must be finite".into(),
        ));
    }
    let lo: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let hi: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    let feasible = Polyhedron::from_box(&lo, &hi)?;

    let q_mat = Matrix::identity(m, m) * 0.5;
    let p = Matrix::from_element(m, m, 1.0) + &q_mat;
    let q_vec = Vector::from_iterator(m, (0..m).map(|j| (cost_slope[j] - alpha[j]) / beta[j]));
    Ok(EquilibriumInstance::new(p, q_mat, q_vec, feasible)?)
}
