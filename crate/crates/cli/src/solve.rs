use std::fs;
use std::path::Path;

use serde_json::json;

use egra_core::solvers::{solution_certificate, solve};
use egra_core::{EquilibriumInstance, SolverConfig, SolverTrace};

use crate::config;
use crate::error::{invalid_instance, CliError};
use crate::{GlobalArgs, SolveArgs};

/// Feasibility slack allowed when certifying a final point.
pub const CERTIFICATE_TOL: f64 = 1e-8;

pub fn run(global: &GlobalArgs, args: &SolveArgs) -> Result<(), CliError> {
    let file = config::load(global)?;
    let cfg = config::solver_config(global, &file, &args.solver, args.method)?;
    let (inst, _) = EquilibriumInstance::load(&args.instance)
        .map_err(|e| invalid_instance(&args.instance, e))?;
    let dir = config::output_dir(global)?;

    let trace = solve(&inst, &cfg)?;
    if trace.start_projected {
        eprintln!("warning: starting point was infeasible and has been projected onto C");
    }
    let stem = args
        .instance
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("instance");
    let path = dir.join(trace_file_name(stem, &cfg));
    write_trace(&path, &trace)?;
    let certificate = solution_certificate(&inst, &trace.final_point, CERTIFICATE_TOL)?;
    config::write_run_config(
        &dir,
        &json!({ "command": "solve", "instance": args.instance, "solver": cfg, "trace": path }),
    )?;

    println!("trace {}", path.display());
    println!("{}", summary_line(&trace, certificate));
    Ok(())
}

pub fn trace_file_name(stem: &str, cfg: &SolverConfig) -> String {
    if cfg.method.uses_lambda0() {
        format!("{stem}_{}_lambda{}.csv", cfg.method, cfg.lambda0)
    } else {
        format!("{stem}_{}.csv", cfg.method)
    }
}

pub fn write_trace(path: &Path, trace: &SolverTrace) -> Result<(), CliError> {
    fs::write(path, trace.to_csv()).map_err(|e| CliError::io("cannot write", path, e))
}

pub fn summary_line(trace: &SolverTrace, certificate: f64) -> String {
    let elapsed = trace.last().map_or(0.0, |r| r.elapsed_seconds);
    format!(
        "method={} status={} iterations={} final_D_n={:.6e} elapsed_seconds={:.6} prox_calls={} diagnostic_prox_calls={} f_evals={} certificate={:.6e}",
        trace.method,
        trace.terminal_status,
        trace.iterations(),
        trace.final_residual(),
        elapsed,
        trace.prox_calls(),
        trace.diagnostic_prox_calls,
        trace.f_evals(),
        certificate
    )
}
