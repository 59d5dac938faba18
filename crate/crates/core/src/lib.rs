//! Solvers for finite-dimensional equilibrium problems `EP(f, C)`:
//! find `x* ∈ C` with `f(x*, y) ≥ 0` for every `y ∈ C`.
//!
//! The bifunctions handled here are quadratic-affine,
//!
//! ```text
//!     f(x, y) = <P x + Q y + q, y - x>
//! ```
//!
//! with `Q` symmetric positive semidefinite and `Q - P` symmetric negative
//! semidefinite, and the feasible set is a polyhedron `C = {x : A x <= b}`.
//!
//! The crate is organised as
//!
//! - [`problem`]: instance model, bifunction evaluation, structural validators;
//! - [`qp`]: a primal active-set solver for the strictly convex QPs behind every
//!   proximal step and projection, plus a brute-force enumeration oracle;
//! - [`solvers`]: the explicit golden ratio algorithm (EGRA) with its adaptive
//!   stepsize, the linesearch extragradient (LEGM) and ergodic (ErgM)
//!   baselines, traces, certificates and rate estimation;
//! - [`generator`]: seeded random instances and Nash-Cournot oligopoly models.
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod generator;
pub(crate) mod linalg;
pub mod problem;
pub mod qp;
pub mod solvers;

pub use generator::{generate, nash_cournot_assemble, GeneratorError, GeneratorSpec};
pub use problem::{EquilibriumInstance, MonotonicityReport, Polyhedron, ProblemError};
pub use qp::{QpError, QpProblem, QpSolution};
pub use solvers::{
    golden_ratio, Method, SolverConfig, SolverError, SolverTrace, TerminalStatus, TraceRecord,
};

/// Dense column vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
