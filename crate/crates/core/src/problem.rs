//! Instance model for quadratic-affine equilibrium problems.
//!
//! An [`EquilibriumInstance`] bundles the bifunction data `(P, Q, q)` with a
//! [`Polyhedron`] feasible set. Construction validates the structural
//! assumptions once; every other operation in this module is a pure function
//! of an already-validated instance.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::GeneratorSpec;
use crate::linalg::{all_finite, asymmetry, max_abs, spectral_norm, sym_eigenvalues};
use crate::qp::{self, QpError};
use crate::{Matrix, Vector};

/// Relative symmetry tolerance for `Q` and `Q - P`.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Absolute eigenvalue tolerance for the semidefiniteness checks.
pub const PSD_TOL: f64 = 1e-8;
/// Slack allowed in sampled three-point inequalities.
pub const LIPSCHITZ_SLACK: f64 = 1e-8;

/// Half-width of the box around the interior point used by feasible sampling.
const SAMPLING_RADIUS: f64 = 10.0;
const SAMPLING_QP_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("{0} contains non-finite entries")]
    NonFinite(&'static str),
    #[error("polyhedron needs at least one constraint row")]
    NoConstraints,
    #[error("recorded interior point violates row {row} by {violation:e}")]
    InteriorPointInfeasible { row: usize, violation: f64 },
    #[error("{matrix} is not symmetric: max |M_ij - M_ji| = {deviation:e}")]
    Asymmetric {
        matrix: &'static str,
        deviation: f64,
    },
    #[error("Q is not positive semidefinite: smallest eigenvalue {eigenvalue:e} < -{PSD_TOL:e}")]
    NotPositiveSemidefinite { eigenvalue: f64 },
    #[error("Q - P is not negative semidefinite: largest eigenvalue {eigenvalue:e} > {PSD_TOL:e}")]
    NotNegativeSemidefinite { eigenvalue: f64 },
    #[error("could not sample feasible points from polyhedron (m = {dim}, l = {rows}): {source}")]
    Sampling {
        dim: usize,
        rows: usize,
        #[source]
        source: QpError,
    },
    #[error("Lipschitz-type certificate failed on {violations} of {samples} sampled triples (worst slack {worst:e})")]
    LipschitzCertificate {
        violations: usize,
        samples: usize,
        worst: f64,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("instance file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("instance file: {0}")]
    Io(#[from] std::io::Error),
}

fn check_len(what: &'static str, expected: usize, v: &Vector) -> Result<(), ProblemError> {
    if v.len() != expected {
        return Err(ProblemError::Dimension {
            what,
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

/// Feasible set `C = {x : A x <= b}` together with a point known to lie in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    a: Matrix,
    b: Vector,
    interior_point: Vector,
}

impl Polyhedron {
    pub fn new(a: Matrix, b: Vector, interior_point: Vector) -> Result<Self, ProblemError> {
        let (rows, dim) = a.shape();
        if rows == 0 {
            return Err(ProblemError::NoConstraints);
        }
        if dim == 0 {
            return Err(ProblemError::Shape(
                "polyhedron dimension must be positive".into(),
            ));
        }
        check_len("b", rows, &b)?;
        check_len("interior_point", dim, &interior_point)?;
        if !all_finite(&a) {
            return Err(ProblemError::NonFinite("A"));
        }
        if !b.iter().chain(interior_point.iter()).all(|v| v.is_finite()) {
            return Err(ProblemError::NonFinite("b / interior_point"));
        }
        let slack = &a * &interior_point - &b;
        for (row, s) in slack.iter().enumerate() {
            // Allow rounding at the level of the row's magnitude.
            let scale =
                1.0 + b[row].abs() + a.row(row).abs().dot(&interior_point.abs().transpose());
            if *s > 1e-12 * scale {
                return Err(ProblemError::InteriorPointInfeasible { row, violation: *s });
            }
        }
        Ok(Self {
            a,
            b,
            interior_point,
        })
    }

    /// Builds `{x : A x <= b}` when no feasible point is known; a phase-1
    /// program finds one or reports infeasibility.
    pub fn from_inequalities(a: Matrix, b: Vector) -> Result<Self, ProblemError> {
        if a.nrows() == 0 {
            return Err(ProblemError::NoConstraints);
        }
        check_len("b", a.nrows(), &b)?;
        let point = qp::find_feasible_point(&a, &b).map_err(|source| ProblemError::Sampling {
            dim: a.ncols(),
            rows: a.nrows(),
            source,
        })?;
        Self::new(a, b, point)
    }

    /// Axis-aligned box `lo <= x <= hi` encoded as `2m` rows; the midpoint is
    /// recorded as interior point.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Result<Self, ProblemError> {
        if lo.len() != hi.len() {
            return Err(ProblemError::Dimension {
                what: "box upper bounds",
                expected: lo.len(),
                found: hi.len(),
            });
        }
        let m = lo.len();
        if let Some(j) = (0..m).find(|&j| lo[j] > hi[j]) {
            return Err(ProblemError::Argument(format!(
                "empty interval [{}, {}] in coordinate {j}",
                lo[j], hi[j]
            )));
        }
        let mut a = Matrix::zeros(2 * m, m);
        let mut b = Vector::zeros(2 * m);
        for j in 0..m {
            a[(2 * j, j)] = 1.0;
            b[2 * j] = hi[j];
            a[(2 * j + 1, j)] = -1.0;
            b[2 * j + 1] = -lo[j];
        }
        let mid = Vector::from_iterator(m, (0..m).map(|j| 0.5 * (lo[j] + hi[j])));
        Self::new(a, b, mid)
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn interior_point(&self) -> &Vector {
        &self.interior_point
    }

    /// `max(0, max_i (A x - b)_i)`.
    pub fn max_violation(&self, x: &Vector) -> f64 {
        (&self.a * x - &self.b)
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(*v))
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        x.len() == self.dim() && self.max_violation(x) <= tol
    }

    /// Draws a feasible point: uniform in a box around the interior point,
    /// projected onto `C`, then pulled a random fraction of the way back to
    /// the interior point so samples are not confined to the boundary.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vector, ProblemError> {
        let m = self.dim();
        let z = Vector::from_iterator(
            m,
            (0..m).map(|j| {
                self.interior_point[j] + rng.random_range(-SAMPLING_RADIUS..=SAMPLING_RADIUS)
            }),
        );
        let p =
            qp::project(self, &z, SAMPLING_QP_TOL).map_err(|source| ProblemError::Sampling {
                dim: m,
                rows: self.rows(),
                source,
            })?;
        let t: f64 = rng.random();
        Ok(&self.interior_point + (p - &self.interior_point) * t)
    }
}

/// Quadratic-affine equilibrium problem `f(x, y) = <P x + Q y + q, y - x>`
/// over a polyhedron.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumInstance {
    p: Matrix,
    q_mat: Matrix,
    q_vec: Vector,
    feasible: Polyhedron,
}

impl EquilibriumInstance {
    /// Validates dimensions, symmetry of `Q` and `Q - P`, `Q ⪰ 0` and
    /// `Q - P ⪯ 0` before accepting the data.
    pub fn new(
        p: Matrix,
        q_mat: Matrix,
        q_vec: Vector,
        feasible: Polyhedron,
    ) -> Result<Self, ProblemError> {
        let m = feasible.dim();
        for (name, mat) in [("P", &p), ("Q", &q_mat)] {
            if mat.shape() != (m, m) {
                return Err(ProblemError::Shape(format!(
                    "{name} is {}x{}, expected {m}x{m}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            if !all_finite(mat) {
                return Err(ProblemError::NonFinite(name));
            }
        }
        check_len("q", m, &q_vec)?;
        if !q_vec.iter().all(|v| v.is_finite()) {
            return Err(ProblemError::NonFinite("q"));
        }

        let asym = asymmetry(&q_mat);
        if asym > SYMMETRY_TOL * (1.0 + max_abs(&q_mat)) {
            return Err(ProblemError::Asymmetric {
                matrix: "Q",
                deviation: asym,
            });
        }
        let diff = &q_mat - &p;
        let asym = asymmetry(&diff);
        if asym > SYMMETRY_TOL * (1.0 + max_abs(&diff)) {
            return Err(ProblemError::Asymmetric {
                matrix: "Q - P",
                deviation: asym,
            });
        }
        let q_min = sym_eigenvalues(&q_mat)[0];
        if q_min < -PSD_TOL {
            return Err(ProblemError::NotPositiveSemidefinite { eigenvalue: q_min });
        }
        let d_max = *sym_eigenvalues(&diff).last().expect("m >= 1");
        if d_max > PSD_TOL {
            return Err(ProblemError::NotNegativeSemidefinite { eigenvalue: d_max });
        }
        Ok(Self {
            p,
            q_mat,
            q_vec,
            feasible,
        })
    }

    pub fn dim(&self) -> usize {
        self.feasible.dim()
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }

    pub fn q_matrix(&self) -> &Matrix {
        &self.q_mat
    }

    pub fn q_vector(&self) -> &Vector {
        &self.q_vec
    }

    pub fn feasible(&self) -> &Polyhedron {
        &self.feasible
    }

    fn check_args(&self, x: &Vector, y: &Vector) -> Result<(), ProblemError> {
        check_len("x", self.dim(), x)?;
        check_len("y", self.dim(), y)
    }

    /// `f(x, y) = (P x + Q y + q)^T (y - x)`. Feasibility is not required.
    pub fn bifunction_eval(&self, x: &Vector, y: &Vector) -> Result<f64, ProblemError> {
        self.check_args(x, y)?;
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: &Vector, y: &Vector) -> f64 {
        let w = &self.p * x + &self.q_mat * y + &self.q_vec;
        w.dot(&(y - x))
    }

    /// Gradient of `y ↦ f(x, y)`: `2 Q y + P x - Q x + q`.
    pub fn bifunction_grad_y(&self, x: &Vector, y: &Vector) -> Result<Vector, ProblemError> {
        self.check_args(x, y)?;
        Ok(self.grad_unchecked(x, y))
    }

    pub(crate) fn grad_unchecked(&self, x: &Vector, y: &Vector) -> Vector {
        &self.q_mat * (y * 2.0 - x) + &self.p * x + &self.q_vec
    }

    /// Closed-form Lipschitz-type constants `c1 = c2 = ||P - Q||_2 / 2`.
    ///
    /// For this family `f(x,y) + f(y,z) - f(x,z) = <(P - Q)(y - x), z - y>`,
    /// which Young's inequality bounds below by `-c (||x-y||^2 + ||y-z||^2)`.
    /// Use [`certify_lipschitz`](Self::certify_lipschitz) to check the pair
    /// on samples before relying on it.
    pub fn lipschitz_constants(&self) -> (f64, f64) {
        let c = 0.5 * spectral_norm(&(&self.p - &self.q_mat));
        (c, c)
    }

    /// Computes the closed-form constants and verifies the three-point
    /// inequality on `samples` random feasible triples.
    pub fn certify_lipschitz(&self, samples: usize, seed: u64) -> Result<(f64, f64), ProblemError> {
        let (c1, c2) = self.lipschitz_constants();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut violations = 0;
        let mut worst = f64::INFINITY;
        for _ in 0..samples {
            let x = self.feasible.sample_point(&mut rng)?;
            let y = self.feasible.sample_point(&mut rng)?;
            let z = self.feasible.sample_point(&mut rng)?;
            let margin = self.three_point_margin(&x, &y, &z, c1, c2);
            worst = worst.min(margin);
            if margin < -LIPSCHITZ_SLACK {
                violations += 1;
            }
        }
        if violations > 0 {
            return Err(ProblemError::LipschitzCertificate {
                violations,
                samples,
                worst,
            });
        }
        Ok((c1, c2))
    }

    /// `f(x,y) + f(y,z) - f(x,z) + c1||x-y||^2 + c2||y-z||^2`, nonnegative
    /// whenever the Lipschitz-type condition holds for `(c1, c2)`.
    pub fn three_point_margin(&self, x: &Vector, y: &Vector, z: &Vector, c1: f64, c2: f64) -> f64 {
        self.eval_unchecked(x, y) + self.eval_unchecked(y, z) - self.eval_unchecked(x, z)
            + c1 * (x - y).norm_squared()
            + c2 * (y - z).norm_squared()
    }

    /// Empirical monotonicity audit on `samples` random feasible pairs and
    /// triples.
    pub fn check_monotonicity(
        &self,
        samples: usize,
        seed: u64,
    ) -> Result<MonotonicityReport, ProblemError> {
        if samples == 0 {
            return Err(ProblemError::Argument("samples must be at least 1".into()));
        }
        let (c1, c2) = self.lipschitz_constants();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut monotone_violations = 0;
        let mut pseudomonotone_violations = 0;
        let mut lipschitz_violations = 0;
        for _ in 0..samples {
            let x = self.feasible.sample_point(&mut rng)?;
            let y = self.feasible.sample_point(&mut rng)?;
            let fxy = self.eval_unchecked(&x, &y);
            let fyx = self.eval_unchecked(&y, &x);
            let slack = 1e-9 * (1.0 + fxy.abs() + fyx.abs());
            if fxy + fyx > slack {
                monotone_violations += 1;
            }
            if fxy >= 0.0 && fyx > slack {
                pseudomonotone_violations += 1;
            }
            let z = self.feasible.sample_point(&mut rng)?;
            if self.three_point_margin(&x, &y, &z, c1, c2) < -LIPSCHITZ_SLACK {
                lipschitz_violations += 1;
            }
        }
        // f(x,y) + f(y,x) = -(y-x)^T (P-Q) (y-x)
        let gamma = sym_eigenvalues(&(&self.p - &self.q_mat))[0];
        Ok(MonotonicityReport {
            samples_tested: samples,
            strongly_monotone_gamma: (gamma > 1e-10).then_some(gamma),
            monotone_violations,
            pseudomonotone_violations,
            lipschitz_c1: c1,
            lipschitz_c2: c2,
            lipschitz_violations,
        })
    }

    /// Extreme eigenvalues used in validator summaries:
    /// `(min eig Q, max eig Q, max eig (Q - P), min eig sym(P - Q))`.
    pub fn spectral_summary(&self) -> SpectralSummary {
        let q = sym_eigenvalues(&self.q_mat);
        let d = sym_eigenvalues(&(&self.q_mat - &self.p));
        SpectralSummary {
            q_min: q[0],
            q_max: *q.last().expect("m >= 1"),
            q_minus_p_max: *d.last().expect("m >= 1"),
            p_minus_q_min: -d.last().expect("m >= 1"),
        }
    }

    pub fn to_json(&self, provenance: Option<&GeneratorSpec>) -> Result<String, ProblemError> {
        Ok(serde_json::to_string_pretty(&InstanceFile::from_instance(
            self, provenance,
        ))?)
    }

    pub fn from_json(text: &str) -> Result<(Self, Option<GeneratorSpec>), ProblemError> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.into_instance()
    }

    pub fn save(
        &self,
        path: &Path,
        provenance: Option<&GeneratorSpec>,
    ) -> Result<(), ProblemError> {
        let mut text = self.to_json(provenance)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, Option<GeneratorSpec>), ProblemError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralSummary {
    pub q_min: f64,
    pub q_max: f64,
    pub q_minus_p_max: f64,
    pub p_minus_q_min: f64,
}

/// Result of [`EquilibriumInstance::check_monotonicity`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub samples_tested: usize,
    /// Smallest eigenvalue of `sym(P - Q)` when positive.
    pub strongly_monotone_gamma: Option<f64>,
    pub monotone_violations: usize,
    pub pseudomonotone_violations: usize,
    pub lipschitz_c1: f64,
    pub lipschitz_c2: f64,
    pub lipschitz_violations: usize,
}

/// On-disk JSON layout of an instance. Matrices are row-major arrays of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub dim: usize,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q_mat: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub interior_point: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_spec: Option<GeneratorSpec>,
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>], ncols: usize) -> Result<Matrix, ProblemError> {
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(ProblemError::Shape(format!(
            "row {i} of {name} has {} entries, expected {ncols}",
            r.len()
        )));
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl InstanceFile {
    pub fn from_instance(inst: &EquilibriumInstance, provenance: Option<&GeneratorSpec>) -> Self {
        let c = inst.feasible();
        Self {
            dim: inst.dim(),
            p: rows_of(inst.p()),
            q_mat: rows_of(inst.q_matrix()),
            q: inst.q_vector().iter().copied().collect(),
            a: rows_of(c.a()),
            b: c.b().iter().copied().collect(),
            interior_point: c.interior_point().iter().copied().collect(),
            generator_spec: provenance.cloned(),
        }
    }

    pub fn into_instance(
        self,
    ) -> Result<(EquilibriumInstance, Option<GeneratorSpec>), ProblemError> {
        let m = self.dim;
        if m == 0 {
            return Err(ProblemError::Shape("dim must be positive".into()));
        }
        if self.p.len() != m || self.q_mat.len() != m {
            return Err(ProblemError::Shape(format!("P and Q must have {m} rows")));
        }
        let p = matrix_from_rows("P", &self.p, m)?;
        let q_mat = matrix_from_rows("Q", &self.q_mat, m)?;
        let a = matrix_from_rows("A", &self.a, m)?;
        let feasible = Polyhedron::new(
            a,
            Vector::from_vec(self.b),
            Vector::from_vec(self.interior_point),
        )?;
        let inst = EquilibriumInstance::new(p, q_mat, Vector::from_vec(self.q), feasible)?;
        Ok((inst, self.generator_spec))
    }
}
