//! Empirical convergence-rate estimates from iterate histories.

use serde::Serialize;

use crate::Vector;

use super::{golden_ratio, SolverError, SolverTrace};

/// Window length used by [`rate_fit`].
pub const RATE_WINDOW: usize = 50;
/// Minimum number of usable points.
pub const RATE_MIN_POINTS: usize = 5;
/// Distances at or below this are treated as exact hits and skipped.
const DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// Largest one-step ratio `e_{n+1} / e_n` inside the window.
    pub q_estimate: f64,
    /// `exp(slope)` of the least-squares line through `(n, ln e_n)`.
    pub r_estimate: f64,
    /// Coefficient of determination of that line.
    pub r_squared: f64,
    pub points: usize,
}

/// Fits `e_n = ||x_n - x_ref||` over the last [`RATE_WINDOW`] iterates with
/// `e_n > 1e-12`.
pub fn rate_fit(iterates: &[Vector], x_ref: &Vector) -> Result<RateFit, SolverError> {
    let usable: Vec<(f64, f64)> = iterates
        .iter()
        .enumerate()
        .map(|(n, x)| (n as f64, (x - x_ref).norm()))
        .filter(|(_, e)| *e > DISTANCE_FLOOR)
        .collect();
    if usable.len() < RATE_MIN_POINTS {
        return Err(SolverError::InsufficientData {
            usable: usable.len(),
            required: RATE_MIN_POINTS,
        });
    }
    let window = &usable[usable.len().saturating_sub(RATE_WINDOW)..];

    let q_estimate = window
        .windows(2)
        .map(|p| p[1].1 / p[0].1)
        .fold(f64::NEG_INFINITY, f64::max);

    let k = window.len() as f64;
    let mean_n = window.iter().map(|p| p.0).sum::<f64>() / k;
    let mean_log = window.iter().map(|p| p.1.ln()).sum::<f64>() / k;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (n, e) in window {
        let dx = n - mean_n;
        let dy = e.ln() - mean_log;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    Ok(RateFit {
        q_estimate,
        r_estimate: slope.exp(),
        r_squared,
        points: window.len(),
    })
}

/// Observed EGRA energy
/// `a_n = φ/(φ-1) ||x̄_n - x*||² + μ λ_n / λ_{n+1} ||x_{n-1} - x_n||²`
/// for every step recorded in a trace kept with `keep_iterates`.
pub fn lyapunov_sequence(trace: &SolverTrace, x_star: &Vector, mu: f64) -> Vec<f64> {
    let phi = golden_ratio();
    let steps = trace
        .averages
        .len()
        .min(trace.records.len().saturating_sub(1))
        .min(trace.iterates.len());
    (0..steps)
        .map(|n| {
            let x_prev = &trace.iterates[n.saturating_sub(1)];
            let x_curr = &trace.iterates[n];
            let ratio = trace.records[n].lambda_n / trace.records[n + 1].lambda_n;
            phi / (phi - 1.0) * (&trace.averages[n] - x_star).norm_squared()
                + mu * ratio * (x_prev - x_curr).norm_squared()
        })
        .collect()
}

/// Smallest `n0` such that `seq` is nonincreasing from `n0` on, allowing a
/// relative rounding slack of `rel_slack` per step.
pub fn descent_start(seq: &[f64], rel_slack: f64) -> usize {
    let mut n0 = 0;
    for n in 1..seq.len() {
        if seq[n] > seq[n - 1] * (1.0 + rel_slack) {
            n0 = n;
        }
    }
    n0
}
