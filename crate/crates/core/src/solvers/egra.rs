//! Explicit golden ratio algorithm.
//!
//! Given `x_{n-1}, x_n ∈ C`, `x̄_{n-1}` and `λ_n`, one step computes
//!
//! ```text
//!     x̄_n     = ((φ - 1) x_n + x̄_{n-1}) / φ
//!     x_{n+1} = prox_{λ_n f(x_n,·)}(x̄_n)
//!     λ_{n+1} = min{ λ_n, μ (||x_{n-1} - x_n||² + ||x_n - x_{n+1}||²)
//!                         / (2 [f(x_{n-1},x_{n+1}) - f(x_{n-1},x_n) - f(x_n,x_{n+1})]_+) }
//! ```
//!
//! with `0/0 = +∞`. The stepsize never needs Lipschitz constants and never
//! increases; for Lipschitz-type constants `c1, c2` it stays above
//! `min{λ_0, μ / (2 max{c1, c2})}`.

use crate::problem::EquilibriumInstance;
use crate::qp::ProxWorkspace;
use crate::Vector;

use super::{
    golden_ratio, starting_point, Method, Run, SolverConfig, SolverError, SolverTrace,
    TerminalStatus,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EgraState {
    /// `x_{n-1}`
    pub x_prev: Vector,
    /// `x_n`
    pub x_curr: Vector,
    /// `x̄_{n-1}`
    pub xbar_prev: Vector,
    pub lambda_prev: f64,
    pub lambda_curr: f64,
    pub n: usize,
}

impl EgraState {
    /// `x_{-1} = x_0 = x̄_{-1} = start`, `λ_{-1} = λ_0`.
    pub fn new(start: Vector, lambda0: f64) -> Self {
        Self {
            x_prev: start.clone(),
            x_curr: start.clone(),
            xbar_prev: start,
            lambda_prev: lambda0,
            lambda_curr: lambda0,
            n: 0,
        }
    }

    /// `((φ - 1) x_n + x̄_{n-1}) / φ`
    pub fn averaged_point(&self) -> Vector {
        let phi = golden_ratio();
        (&self.x_curr * (phi - 1.0) + &self.xbar_prev) / phi
    }
}

/// Adaptive stepsize rule; a nonpositive bracket leaves `λ_n` unchanged.
#[allow(clippy::too_many_arguments)]
pub fn stepsize_update(
    lambda_n: f64,
    mu: f64,
    x_prev: &Vector,
    x_curr: &Vector,
    x_next: &Vector,
    f_xy: f64,
    f_xz: f64,
    f_yz: f64,
) -> f64 {
    let denom = 2.0 * (f_xy - f_xz - f_yz).max(0.0);
    if denom <= 0.0 {
        return lambda_n;
    }
    let numer = mu * ((x_prev - x_curr).norm_squared() + (x_curr - x_next).norm_squared());
    lambda_n.min(numer / denom)
}

pub(super) struct StepOutcome {
    pub state: EgraState,
    pub average: Vector,
}

pub(super) fn step_with(
    ws: &mut ProxWorkspace,
    inst: &EquilibriumInstance,
    mu: f64,
    s: &EgraState,
) -> Result<StepOutcome, crate::qp::QpError> {
    let xbar = s.averaged_point();
    let x_next = ws.prox(inst, &s.x_curr, &xbar, s.lambda_curr)?;
    let f_xy = inst.eval_unchecked(&s.x_prev, &x_next);
    let f_xz = inst.eval_unchecked(&s.x_prev, &s.x_curr);
    let f_yz = inst.eval_unchecked(&s.x_curr, &x_next);
    let lambda_next = stepsize_update(
        s.lambda_curr,
        mu,
        &s.x_prev,
        &s.x_curr,
        &x_next,
        f_xy,
        f_xz,
        f_yz,
    );
    Ok(StepOutcome {
        state: EgraState {
            x_prev: s.x_curr.clone(),
            x_curr: x_next,
            xbar_prev: xbar.clone(),
            lambda_prev: s.lambda_curr,
            lambda_curr: lambda_next,
            n: s.n + 1,
        },
        average: xbar,
    })
}

/// One iteration from `s`; the returned state's `x_curr` is `x_{n+1}`.
pub fn egra_step(
    inst: &EquilibriumInstance,
    cfg: &SolverConfig,
    s: &EgraState,
) -> Result<EgraState, SolverError> {
    cfg.validate()?;
    let mut ws = ProxWorkspace::new(cfg.qp_tol)?;
    step_with(&mut ws, inst, cfg.mu, s)
        .map(|o| o.state)
        .map_err(|source| SolverError::Qp {
            iteration: s.n,
            source,
            partial: Box::new(SolverTrace {
                method: Method::Egra,
                records: Vec::new(),
                terminal_status: TerminalStatus::Stalled,
                final_point: s.x_curr.clone(),
                diagnostic_prox_calls: 0,
                start_projected: false,
                iterates: Vec::new(),
                averages: Vec::new(),
            }),
        })
}

/// Runs EGRA until `D_n <= cfg.tol` or `cfg.max_iter` rows are recorded.
pub fn egra_solve(
    inst: &EquilibriumInstance,
    cfg: &SolverConfig,
) -> Result<SolverTrace, SolverError> {
    if cfg.method != Method::Egra {
        return Err(SolverError::Config(format!(
            "egra_solve called with method {}",
            cfg.method
        )));
    }
    cfg.validate()?;
    let mut ws = ProxWorkspace::new(cfg.qp_tol)?;
    let (start, projected) = starting_point(inst, cfg, &mut ws)?;
    let mut run = Run::new(Method::Egra, &start, projected, cfg.keep_iterates);
    let mut state = EgraState::new(start, cfg.lambda0);

    loop {
        let d_n = match run.diagnostic(&mut ws, inst, &state.x_curr, cfg.d_metric_lambda) {
            Ok(d) => d,
            Err(e) => return Err(run.fail(state.n, e)),
        };
        run.record(d_n, state.lambda_curr, &state.x_curr);
        if d_n <= cfg.tol {
            return Ok(run.finish(TerminalStatus::Converged));
        }
        if run.trace.records.len() >= cfg.max_iter {
            return Ok(run.finish(TerminalStatus::MaxIter));
        }
        let outcome = match step_with(&mut ws, inst, cfg.mu, &state) {
            Ok(o) => o,
            Err(e) => return Err(run.fail(state.n, e)),
        };
        run.prox_calls += 1;
        run.f_evals += 3;
        if run.keep {
            run.trace.averages.push(outcome.average);
        }
        state = outcome.state;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Polyhedron;
    use crate::Matrix;

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    #[test]
    fn averaging_is_idempotent_at_fixed_point() {
        let p = v(&[0.3, -2.0, 7.5]);
        let s = EgraState::new(p.clone(), 1.0);
        assert!((s.averaged_point() - p).amax() < 1e-15);
    }

    #[test]
    fn averaging_hand_example() {
        let s = EgraState {
            x_prev: v(&[1.0, 0.0]),
            x_curr: v(&[1.0, 0.0]),
            xbar_prev: v(&[0.0, 1.0]),
            lambda_prev: 1.0,
            lambda_curr: 1.0,
            n: 0,
        };
        let xb = s.averaged_point();
        // (φ-1)/φ = 0.381966..., 1/φ = 0.618034...
        assert!((xb[0] - 0.381_966_011_250_105_1).abs() < 1e-6);
        assert!((xb[1] - 0.618_033_988_749_894_8).abs() < 1e-6);
    }

    #[test]
    fn stepsize_cases() {
        let z = v(&[0.0]);
        // nonpositive bracket keeps λ
        assert_eq!(stepsize_update(0.7, 0.5, &z, &z, &z, -0.3, 0.0, 0.0), 0.7);
        // sum of squares 2, bracket 2: 0.5 * 2 / 4
        let (a, b, c) = (v(&[0.0]), v(&[1.0]), v(&[2.0]));
        assert_eq!(stepsize_update(1.0, 0.5, &a, &b, &c, 2.0, 0.0, 0.0), 0.25);
        assert_eq!(stepsize_update(0.1, 0.5, &a, &b, &c, 2.0, 0.0, 0.0), 0.1);
        // 0/0 convention
        assert_eq!(stepsize_update(0.4, 0.5, &z, &z, &z, 0.0, 0.0, 0.0), 0.4);
    }

    #[test]
    fn step_at_solution_is_stationary() {
        // f(x,y) = (x + 1)(y - x) on [0, 10]: solution x* = 0
        let c = Polyhedron::from_box(&[0.0], &[10.0]).unwrap();
        let inst = EquilibriumInstance::new(
            Matrix::from_row_slice(1, 1, &[1.0]),
            Matrix::zeros(1, 1),
            v(&[1.0]),
            c,
        )
        .unwrap();
        let s = EgraState::new(v(&[0.0]), 0.8);
        let next = egra_step(&inst, &SolverConfig::default(), &s).unwrap();
        assert!(next.x_curr[0].abs() < 1e-12);
        assert_eq!(next.lambda_curr, 0.8);
        assert_eq!(next.n, 1);
    }
}
