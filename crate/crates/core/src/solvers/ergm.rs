//! Ergodic projected-gradient baseline with stepsizes `1/k`.
//!
//! `x_{k+1} = P_C(x_k - (1/k) ((P + Q) x_k + q))`, reported through the
//! weighted average `z_k = Σ_{j<=k} x_j / j  /  Σ_{j<=k} 1/j`.

use crate::problem::EquilibriumInstance;
use crate::qp::ProxWorkspace;

use super::{starting_point, Method, Run, SolverConfig, SolverError, SolverTrace, TerminalStatus};

/// Normalized averaging weights `(1/j) / Σ_{i<=n} 1/i` for `j = 1..=n`.
pub fn ergodic_weights(n: usize) -> Vec<f64> {
    let total: f64 = (1..=n).map(|j| 1.0 / j as f64).sum();
    (1..=n).map(|j| 1.0 / (j as f64 * total)).collect()
}

pub fn ergm_solve(
    inst: &EquilibriumInstance,
    cfg: &SolverConfig,
) -> Result<SolverTrace, SolverError> {
    if cfg.method != Method::Ergm {
        return Err(SolverError::Config(format!(
            "ergm_solve called with method {}",
            cfg.method
        )));
    }
    cfg.validate()?;
    let mut ws = ProxWorkspace::new(cfg.qp_tol)?;
    let (mut x, projected) = starting_point(inst, cfg, &mut ws)?;
    let mut run = Run::new(Method::Ergm, &x, projected, cfg.keep_iterates);
    let mut weighted_sum = x.clone() * 0.0;
    let mut weight_total = 0.0;

    loop {
        let n = run.trace.records.len();
        let step = 1.0 / (n + 1) as f64;
        weighted_sum += &x * step;
        weight_total += step;
        let average = &weighted_sum / weight_total;
        let reported = if cfg.ergm_report_at_iterate {
            &x
        } else {
            &average
        };

        let d_n = match run.diagnostic(&mut ws, inst, reported, cfg.d_metric_lambda) {
            Ok(d) => d,
            Err(e) => return Err(run.fail(n, e)),
        };
        run.record(d_n, step, reported);
        if d_n <= cfg.tol {
            return Ok(run.finish(TerminalStatus::Converged));
        }
        if run.trace.records.len() >= cfg.max_iter {
            return Ok(run.finish(TerminalStatus::MaxIter));
        }

        let g = inst.grad_unchecked(&x, &x);
        x = match ws.project(inst.feasible(), &(&x - g * step)) {
            Ok(p) => p,
            Err(e) => return Err(run.fail(n, e)),
        };
        run.prox_calls += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_are_normalized() {
        for n in [1, 2, 10, 1000] {
            let w = ergodic_weights(n);
            assert_eq!(w.len(), n);
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(w.windows(2).all(|p| p[0] > p[1]));
        }
    }
}
