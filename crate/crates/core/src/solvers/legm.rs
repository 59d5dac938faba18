//! Linesearch extragradient baseline.
//!
//! Per iteration, with fixed `λ = lambda0`:
//! 1. `y_n = prox_{λ f(x_n,·)}(x_n)`;
//! 2. Armijo search for the smallest `k >= 0` such that
//!    `z = (1 - η^k) x_n + η^k y_n` satisfies
//!    `f(z, y_n) + α/(2λ) ||x_n - y_n||² <= 0`;
//! 3. `g = ∇_y f(z, x_n)`; unless `g = 0`, project `x_n - σ g` onto `C` with
//!    `σ = f(z, x_n) / ||g||²`.

use crate::problem::EquilibriumInstance;
use crate::qp::ProxWorkspace;

use super::{starting_point, Method, Run, SolverConfig, SolverError, SolverTrace, TerminalStatus};

/// Linesearch trials before the run is declared stalled.
const MAX_LINESEARCH_STEPS: i32 = 60;

pub fn legm_solve(
    inst: &EquilibriumInstance,
    cfg: &SolverConfig,
) -> Result<SolverTrace, SolverError> {
    if cfg.method != Method::Legm {
        return Err(SolverError::Config(format!(
            "legm_solve called with method {}",
            cfg.method
        )));
    }
    cfg.validate()?;
    let lambda = cfg.lambda0;
    let mut ws = ProxWorkspace::new(cfg.qp_tol)?;
    let (mut x, projected) = starting_point(inst, cfg, &mut ws)?;
    let mut run = Run::new(Method::Legm, &x, projected, cfg.keep_iterates);

    loop {
        let n = run.trace.records.len();
        let y = match ws.prox(inst, &x, &x, lambda) {
            Ok(y) => y,
            Err(e) => return Err(run.fail(n, e)),
        };
        run.prox_calls += 1;
        let gap = (&x - &y).norm_squared();
        let d_n = if lambda == cfg.d_metric_lambda {
            gap
        } else {
            match run.diagnostic(&mut ws, inst, &x, cfg.d_metric_lambda) {
                Ok(d) => d,
                Err(e) => return Err(run.fail(n, e)),
            }
        };
        run.record(d_n, lambda, &x);
        if d_n <= cfg.tol {
            return Ok(run.finish(TerminalStatus::Converged));
        }
        if run.trace.records.len() >= cfg.max_iter {
            return Ok(run.finish(TerminalStatus::MaxIter));
        }

        let armijo = cfg.linesearch_alpha / (2.0 * lambda) * gap;
        let mut z = None;
        for k in 0..=MAX_LINESEARCH_STEPS {
            let t = cfg.linesearch_eta.powi(k);
            let cand = &x * (1.0 - t) + &y * t;
            run.f_evals += 1;
            if inst.eval_unchecked(&cand, &y) + armijo <= 0.0 {
                z = Some(cand);
                break;
            }
        }
        let Some(z) = z else {
            return Ok(run.finish(TerminalStatus::Stalled));
        };

        let g = inst.grad_unchecked(&z, &x);
        let g2 = g.norm_squared();
        if g2 > 0.0 {
            run.f_evals += 1;
            let sigma = inst.eval_unchecked(&z, &x) / g2;
            x = match ws.project(inst.feasible(), &(&x - g * sigma)) {
                Ok(p) => p,
                Err(e) => return Err(run.fail(n, e)),
            };
            run.prox_calls += 1;
        }
    }
}
