//! Iterative solvers for `EP(f, C)` and the diagnostics around them.
//!
//! All three methods share [`SolverConfig`] and report a [`SolverTrace`]:
//! row `n` holds the residual `D_n = ||x_n - prox_{λ f(x_n,·)}(x_n)||^2`
//! (at the fixed diagnostic `λ = d_metric_lambda`) of the point the method
//! reports at iteration `n`, together with cumulative work counters. A run
//! stops as soon as `D_n <= tol`, so `converged` holds exactly when the last
//! recorded residual is below tolerance.
//!
//! `prox_calls` counts the QP subproblems a method needs to advance (prox
//! steps and projections); the QPs spent on `D_n` are tallied separately in
//! [`SolverTrace::diagnostic_prox_calls`].

mod certificate;
mod egra;
mod ergm;
mod legm;
mod rate;
mod trace;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{EquilibriumInstance, ProblemError};
use crate::qp::{ProxWorkspace, QpError, DEFAULT_QP_TOL};
use crate::Vector;

pub use certificate::{residual_d, solution_certificate};
pub use egra::{egra_solve, egra_step, stepsize_update, EgraState};
pub use ergm::{ergm_solve, ergodic_weights};
pub use legm::legm_solve;
pub use rate::{descent_start, lyapunov_sequence, rate_fit, RateFit};
pub use trace::{parse_trace_csv, TerminalStatus, TraceRecord, TRACE_CSV_HEADER};

/// `φ = (1 + √5) / 2`.
pub fn golden_ratio() -> f64 {
    0.5 * (1.0 + 5.0_f64.sqrt())
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("subproblem failed at iteration {iteration}: {source}")]
    Qp {
        iteration: usize,
        #[source]
        source: QpError,
        partial: Box<SolverTrace>,
    },
    #[error("subproblem failed: {0}")]
    Subproblem(#[from] QpError),
    #[error("insufficient data for rate fit: {usable} usable points, need at least {required}")]
    InsufficientData { usable: usize, required: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "EGRA")]
    Egra,
    #[serde(rename = "LEGM")]
    Legm,
    #[serde(rename = "ErgM")]
    Ergm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Egra, Method::Legm, Method::Ergm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Egra => "EGRA",
            Method::Legm => "LEGM",
            Method::Ergm => "ErgM",
        }
    }

    /// Whether the method's behaviour depends on `lambda0`.
    pub fn uses_lambda0(self) -> bool {
        !matches!(self, Method::Ergm)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "egra" => Ok(Method::Egra),
            "legm" => Ok(Method::Legm),
            "ergm" => Ok(Method::Ergm),
            other => Err(format!(
                "unknown method `{other}` (expected EGRA, LEGM or ErgM)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: Method,
    /// Initial stepsize for EGRA, fixed prox parameter for LEGM.
    pub lambda0: f64,
    pub mu: f64,
    /// Stop once `D_n <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub qp_tol: f64,
    /// The `λ` used in the `D_n` diagnostic.
    pub d_metric_lambda: f64,
    /// Seed for sampled certificates; the iterations themselves are deterministic.
    pub seed: u64,
    pub linesearch_eta: f64,
    pub linesearch_alpha: f64,
    /// Starting point; `(1, …, 1)` when absent.
    pub start: Option<Vec<f64>>,
    /// Report ErgM's `D_n` at `x_n` rather than at the ergodic average.
    pub ergm_report_at_iterate: bool,
    /// Keep every iterate (and EGRA's averages) in the trace.
    pub keep_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Egra,
            lambda0: 1.0,
            mu: 0.45 * golden_ratio(),
            tol: 1e-6,
            max_iter: 5000,
            qp_tol: DEFAULT_QP_TOL,
            d_metric_lambda: 1.0,
            seed: 0,
            linesearch_eta: 0.5,
            linesearch_alpha: 0.5,
            start: None,
            ergm_report_at_iterate: false,
            keep_iterates: false,
        }
    }
}

impl SolverConfig {
    pub fn for_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::Config(msg));
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return bad(format!("lambda0 must be positive, got {}", self.lambda0));
        }
        if self.method == Method::Egra && !(self.mu > 0.0 && self.mu < 0.5 * golden_ratio()) {
            return bad(format!("mu must lie in (0, φ/2) for EGRA, got {}", self.mu));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if !(self.qp_tol > 0.0 && self.qp_tol <= crate::qp::MAX_QP_TOL) {
            return bad(format!("qp_tol must lie in (0, 1e-2], got {}", self.qp_tol));
        }
        if !(self.d_metric_lambda > 0.0 && self.d_metric_lambda.is_finite()) {
            return bad(format!(
                "d_metric_lambda must be positive, got {}",
                self.d_metric_lambda
            ));
        }
        for (name, v) in [
            ("linesearch_eta", self.linesearch_eta),
            ("linesearch_alpha", self.linesearch_alpha),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        Ok(())
    }
}

/// Per-run output of every solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub method: Method,
    pub records: Vec<TraceRecord>,
    pub terminal_status: TerminalStatus,
    pub final_point: Vector,
    /// QPs spent on `D_n` evaluations, not included in `prox_calls`.
    pub diagnostic_prox_calls: usize,
    /// The configured start was infeasible and was projected onto `C`.
    pub start_projected: bool,
    /// `x_n` per recorded row when `keep_iterates` is set.
    pub iterates: Vec<Vector>,
    /// EGRA's `x̄_n` per completed step when `keep_iterates` is set.
    pub averages: Vec<Vector>,
}

impl SolverTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn final_residual(&self) -> f64 {
        self.last().map_or(f64::NAN, |r| r.d_n)
    }

    pub fn prox_calls(&self) -> usize {
        self.last().map_or(0, |r| r.prox_calls)
    }

    pub fn f_evals(&self) -> usize {
        self.last().map_or(0, |r| r.f_evals)
    }

    /// First row with `D_n <= tol`.
    pub fn first_below(&self, tol: f64) -> Option<&TraceRecord> {
        self.records.iter().find(|r| r.d_n <= tol)
    }
}

/// Dispatches on `cfg.method`.
pub fn solve(inst: &EquilibriumInstance, cfg: &SolverConfig) -> Result<SolverTrace, SolverError> {
    match cfg.method {
        Method::Egra => egra_solve(inst, cfg),
        Method::Legm => legm_solve(inst, cfg),
        Method::Ergm => ergm_solve(inst, cfg),
    }
}

/// Shared bookkeeping for the solver loops.
struct Run {
    trace: SolverTrace,
    clock: Instant,
    prox_calls: usize,
    f_evals: usize,
    keep: bool,
}

impl Run {
    fn new(method: Method, start: &Vector, start_projected: bool, keep: bool) -> Self {
        Self {
            trace: SolverTrace {
                method,
                records: Vec::new(),
                terminal_status: TerminalStatus::MaxIter,
                final_point: start.clone(),
                diagnostic_prox_calls: 0,
                start_projected,
                iterates: Vec::new(),
                averages: Vec::new(),
            },
            clock: Instant::now(),
            prox_calls: 0,
            f_evals: 0,
            keep,
        }
    }

    fn diagnostic(
        &mut self,
        ws: &mut ProxWorkspace,
        inst: &EquilibriumInstance,
        x: &Vector,
        lambda: f64,
    ) -> Result<f64, QpError> {
        self.trace.diagnostic_prox_calls += 1;
        let y = ws.prox(inst, x, x, lambda)?;
        Ok((x - y).norm_squared())
    }

    fn record(&mut self, d_n: f64, lambda_n: f64, point: &Vector) {
        let n = self.trace.records.len();
        self.trace.records.push(TraceRecord {
            n,
            d_n,
            lambda_n,
            elapsed_seconds: self.clock.elapsed().as_secs_f64(),
            prox_calls: self.prox_calls,
            f_evals: self.f_evals,
        });
        if self.keep {
            self.trace.iterates.push(point.clone());
        }
        self.trace.final_point = point.clone();
    }

    fn fail(self, iteration: usize, source: QpError) -> SolverError {
        SolverError::Qp {
            iteration,
            source,
            partial: Box::new(self.trace),
        }
    }

    fn finish(mut self, status: TerminalStatus) -> SolverTrace {
        self.trace.terminal_status = status;
        self.trace
    }
}

/// Resolves the configured start, projecting it onto `C` when infeasible.
fn starting_point(
    inst: &EquilibriumInstance,
    cfg: &SolverConfig,
    ws: &mut ProxWorkspace,
) -> Result<(Vector, bool), SolverError> {
    let m = inst.dim();
    let x0 = match &cfg.start {
        Some(v) if v.len() != m => {
            return Err(SolverError::Config(format!(
                "start has length {}, expected {m}",
                v.len()
            )))
        }
        Some(v) => Vector::from_column_slice(v),
        None => Vector::from_element(m, 1.0),
    };
    if inst.feasible().max_violation(&x0) <= 1e-3 * cfg.qp_tol {
        return Ok((x0, false));
    }
    let projected = ws.project(inst.feasible(), &x0)?;
    Ok((projected, true))
}
