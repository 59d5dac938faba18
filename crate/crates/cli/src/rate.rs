use std::fs;

use serde_json::json;

use egra_core::solvers::{rate_fit, solve, RateFit};
use egra_core::{EquilibriumInstance, Method, SolverConfig, Vector};

use crate::config;
use crate::error::{invalid_instance, CliError};
use crate::{GlobalArgs, RateArgs};

/// Tolerance of the high-accuracy reference run.
pub const REFERENCE_TOL: f64 = 1e-12;
/// Default tolerance of the run whose iterates are fitted.
pub const WORKING_TOL: f64 = 1e-10;
/// `r_estimate` at or below this counts as R-linear.
pub const R_LINEAR_THRESHOLD: f64 = 0.999;
const SYNTHETIC_LENGTH: usize = 60;

pub fn run(global: &GlobalArgs, args: &RateArgs) -> Result<(), CliError> {
    let file = config::load(global)?;
    let mut cfg = config::solver_config(global, &file, &args.solver, Some(Method::Egra))?;
    cfg.tol = global.tol.unwrap_or(WORKING_TOL);
    let (inst, provenance) = EquilibriumInstance::load(&args.instance)
        .map_err(|e| invalid_instance(&args.instance, e))?;
    let dir = config::output_dir(global)?;

    let delta = args.delta.or_else(|| {
        provenance
            .as_ref()
            .filter(|s| s.strongly_monotone)
            .map(|s| s.strong_gap)
    });
    let gamma = inst.spectral_summary().p_minus_q_min;
    let strong = match delta {
        Some(d) => gamma >= d - 1e-8,
        None => gamma > 1e-10,
    };
    if !strong {
        eprintln!(
            "warning: instance is not strongly monotone{} (smallest eigenvalue of P - Q is {gamma:.3e}); the rate guarantee does not apply",
            delta.map_or(String::new(), |d| format!(" with modulus {d}"))
        );
    }

    let (iterates, x_ref, reference_iterations) = match args.synthetic_geometric {
        Some(ratio) => {
            let m = inst.dim();
            let v = Vector::from_element(m, 1.0 / (m as f64).sqrt());
            let x_ref = Vector::zeros(m);
            let iterates = (0..SYNTHETIC_LENGTH)
                .map(|n| &x_ref + &v * ratio.powi(n as i32))
                .collect();
            (iterates, x_ref, None)
        }
        None => {
            let reference = solve(
                &inst,
                &SolverConfig {
                    tol: REFERENCE_TOL,
                    ..cfg.clone()
                },
            )?;
            if reference.final_residual() > REFERENCE_TOL {
                eprintln!(
                    "warning: reference run stopped at D_n = {:.3e} ({}), fits are relative to that point",
                    reference.final_residual(),
                    reference.terminal_status
                );
            }
            let working = solve(
                &inst,
                &SolverConfig {
                    keep_iterates: true,
                    ..cfg.clone()
                },
            )?;
            println!(
                "working run: tol {:e}, {} iterations, {}",
                cfg.tol,
                working.iterations(),
                working.terminal_status
            );
            let reference_iterations = reference.iterations();
            (
                working.iterates,
                reference.final_point,
                Some(reference_iterations),
            )
        }
    };

    let fit = rate_fit(&iterates, &x_ref)?;
    let verdict = fit.r_estimate <= R_LINEAR_THRESHOLD;
    print_fit(&fit, verdict);

    let report = json!({
        "instance": args.instance,
        "strongly_monotone": strong,
        "min_eig_p_minus_q": gamma,
        "reference_tol": REFERENCE_TOL,
        "reference_iterations": reference_iterations,
        "working_tol": cfg.tol,
        "synthetic_geometric": args.synthetic_geometric,
        "fit": fit,
        "r_linear": verdict,
    });
    let path = dir.join("rate_report.json");
    fs::write(&path, format!("{report:#}\n"))
        .map_err(|e| CliError::io("cannot write", &path, e))?;
    config::write_run_config(
        &dir,
        &json!({ "command": "rate", "instance": args.instance, "solver": cfg, "delta": delta }),
    )?;
    Ok(())
}

fn print_fit(fit: &RateFit, verdict: bool) {
    println!("points = {}", fit.points);
    println!("q_estimate = {:.10}", fit.q_estimate);
    println!("r_estimate = {:.10}", fit.r_estimate);
    println!("r_squared = {:.6}", fit.r_squared);
    println!("R-linear: {}", if verdict { "yes" } else { "no" });
}
