//! Benchmark sweeps over dimensions, seeds, methods and initial stepsizes.
//!
//! Output layout:
//!
//! ```text
//! <output>/run_config.json
//! <output>/summary.csv
//! <output>/instances/instance_m<dim>_seed<seed>.json
//! <output>/traces/m<dim>_seed<seed>_<method>[_lambda<λ0>].csv
//! <output>/plots/m<dim>_seed<seed>_{iterations,time}.svg
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use egra_core::solvers::{solution_certificate, solve};
use egra_core::{
    generate, EquilibriumInstance, GeneratorSpec, Method, SolverConfig, SolverError, SolverTrace,
};

use crate::config::{self, FileConfig};
use crate::error::CliError;
use crate::plot::{self, Series};
use crate::solve::CERTIFICATE_TOL;
use crate::{BenchArgs, GlobalArgs};

pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone, Serialize)]
pub struct BenchPlan {
    pub dims: Vec<usize>,
    pub methods: Vec<Method>,
    pub lambda0_sweep: Vec<f64>,
    pub seeds: Vec<u64>,
    pub constraint_count: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub output_dir: PathBuf,
    /// Everything else the solvers read.
    pub solver: SolverConfig,
}

impl BenchPlan {
    fn from_args(
        global: &GlobalArgs,
        args: &BenchArgs,
        file: &FileConfig,
    ) -> Result<Self, CliError> {
        let solver = config::solver_config(global, file, &args.solver, None)?;
        let methods = match &args.methods {
            None => file.bench.methods.clone(),
            Some(names) => names
                .iter()
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<Method>().map_err(CliError::Usage))
                .collect::<Result<Vec<_>, _>>()?,
        };
        let seeds = match (&args.seeds, global.seed) {
            (Some(s), _) => s.clone(),
            (None, Some(s)) => vec![s],
            (None, None) => file.bench.seeds.clone(),
        };
        let plan = Self {
            dims: args
                .dims
                .as_ref()
                .cloned()
                .unwrap_or_else(|| file.bench.dims.clone()),
            methods: dedup(methods),
            lambda0_sweep: match (&args.lambda0_sweep, args.solver.lambda0) {
                (Some(sweep), _) => sweep.clone(),
                (None, Some(l)) => vec![l],
                (None, None) => file.bench.lambda0_sweep.clone(),
            },
            seeds: dedup(seeds),
            constraint_count: args.constraints.unwrap_or(file.generator.constraint_count),
            tol: solver.tol,
            max_iter: solver.max_iter,
            output_dir: config::output_dir(global)?,
            solver,
        };
        for (name, empty) in [
            ("dims", plan.dims.is_empty()),
            ("methods", plan.methods.is_empty()),
            ("seeds", plan.seeds.is_empty()),
            ("lambda0 sweep", plan.lambda0_sweep.is_empty()),
        ] {
            if empty {
                return Err(CliError::Usage(format!(
                    "the benchmark needs at least one entry in {name}"
                )));
            }
        }
        if plan.dims.contains(&0)
            || plan
                .lambda0_sweep
                .iter()
                .any(|l| !(*l > 0.0 && l.is_finite()))
        {
            return Err(CliError::Usage(
                "dims and lambda0 values must be positive".into(),
            ));
        }
        Ok(plan)
    }

    /// Every run in a fixed order; ErgM ignores `λ0` and runs once.
    pub fn runs(&self) -> Vec<RunSpec> {
        let mut out = Vec::new();
        for &dim in &self.dims {
            for &seed in &self.seeds {
                for &method in &self.methods {
                    if method.uses_lambda0() {
                        for &l in &self.lambda0_sweep {
                            out.push(RunSpec {
                                dim,
                                seed,
                                method,
                                lambda0: Some(l),
                            });
                        }
                    } else {
                        out.push(RunSpec {
                            dim,
                            seed,
                            method,
                            lambda0: None,
                        });
                    }
                }
            }
        }
        out
    }
}

fn dedup<T: PartialEq + Clone>(v: Vec<T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(v.len());
    for x in v {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub dim: usize,
    pub seed: u64,
    pub method: Method,
    pub lambda0: Option<f64>,
}

impl RunSpec {
    fn label(&self) -> String {
        match self.lambda0 {
            Some(l) => format!("{} lambda0={l}", self.method),
            None => self.method.to_string(),
        }
    }

    fn trace_name(&self) -> String {
        match self.lambda0 {
            Some(l) => format!(
                "m{}_seed{}_{}_lambda{l}.csv",
                self.dim, self.seed, self.method
            ),
            None => format!("m{}_seed{}_{}.csv", self.dim, self.seed, self.method),
        }
    }
}

/// One row of `summary.csv`. Empty cells mean "not applicable" or "not reached".
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub dim: usize,
    pub method: String,
    pub lambda0: Option<f64>,
    pub seed: u64,
    pub status: String,
    pub iterations: usize,
    pub iterations_to_tol: Option<usize>,
    pub time_to_tol: Option<f64>,
    pub final_d_n: Option<f64>,
    pub elapsed_seconds: Option<f64>,
    pub prox_calls: usize,
    pub diagnostic_prox_calls: usize,
    pub f_evals: usize,
    pub certificate: Option<f64>,
    pub trace_file: String,
    pub error: String,
}

impl SummaryRow {
    fn new(run: &RunSpec) -> Self {
        Self {
            dim: run.dim,
            method: run.method.to_string(),
            lambda0: run.lambda0,
            seed: run.seed,
            status: "error".into(),
            iterations: 0,
            iterations_to_tol: None,
            time_to_tol: None,
            final_d_n: None,
            elapsed_seconds: None,
            prox_calls: 0,
            diagnostic_prox_calls: 0,
            f_evals: 0,
            certificate: None,
            trace_file: String::new(),
            error: String::new(),
        }
    }

    fn fill_from_trace(&mut self, trace: &SolverTrace, tol: f64) {
        self.iterations = trace.iterations();
        if let Some(r) = trace.first_below(tol) {
            self.iterations_to_tol = Some(r.n);
            self.time_to_tol = Some(r.elapsed_seconds);
        }
        self.final_d_n = trace.last().map(|r| r.d_n);
        self.elapsed_seconds = trace.last().map(|r| r.elapsed_seconds);
        self.prox_calls = trace.prox_calls();
        self.diagnostic_prox_calls = trace.diagnostic_prox_calls;
        self.f_evals = trace.f_evals();
    }
}

struct RunOutcome {
    spec: RunSpec,
    row: SummaryRow,
    trace: Option<SolverTrace>,
}

pub fn run(global: &GlobalArgs, args: &BenchArgs) -> Result<(), CliError> {
    let file = config::load(global)?;
    let plan = BenchPlan::from_args(global, args, &file)?;
    // Writing the effective plan first also checks that the directory is writable.
    config::write_run_config(
        &plan.output_dir,
        &json!({ "command": "bench", "plan": plan }),
    )?;
    let dirs = ["instances", "traces", "plots"].map(|d| plan.output_dir.join(d));
    for d in &dirs {
        fs::create_dir_all(d).map_err(|e| CliError::io("cannot create", d, e))?;
    }
    let [instance_dir, trace_dir, plot_dir] = dirs;

    let instances = build_instances(&plan, &instance_dir);
    let runs = plan.runs();
    let execute = || -> Vec<RunOutcome> {
        runs.par_iter()
            .map(|spec| execute_run(&plan, spec, &instances, &trace_dir))
            .collect()
    };
    let outcomes = if args.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .map_err(|e| CliError::Internal(e.to_string()))?
            .install(execute)
    } else {
        execute()
    };

    let summary_path = plan.output_dir.join(SUMMARY_FILE);
    write_summary(&summary_path, outcomes.iter().map(|o| &o.row))?;
    let plots = write_plots(&plan, &outcomes, &plot_dir)?;

    println!(
        "{:>5} {:>6} {:>8} {:>6} {:>10} {:>10} {:>12} {:>12} {:>8}",
        "dim", "method", "lambda0", "seed", "status", "iters", "iters_to_tol", "final_D_n", "prox"
    );
    for o in &outcomes {
        let r = &o.row;
        println!(
            "{:>5} {:>6} {:>8} {:>6} {:>10} {:>10} {:>12} {:>12} {:>8}",
            r.dim,
            r.method,
            r.lambda0.map_or("-".into(), |l| l.to_string()),
            r.seed,
            r.status,
            r.iterations,
            r.iterations_to_tol.map_or("-".into(), |n| n.to_string()),
            r.final_d_n.map_or("-".into(), |d| format!("{d:.3e}")),
            r.prox_calls
        );
    }
    println!("summary {}", summary_path.display());
    println!(
        "{} trace files, {} plots",
        outcomes.iter().filter(|o| o.trace.is_some()).count(),
        plots
    );
    Ok(())
}

type InstanceMap = BTreeMap<(usize, u64), Result<EquilibriumInstance, String>>;

fn build_instances(plan: &BenchPlan, dir: &Path) -> InstanceMap {
    let keys: Vec<(usize, u64)> = plan
        .dims
        .iter()
        .flat_map(|&d| plan.seeds.iter().map(move |&s| (d, s)))
        .collect();
    keys.par_iter()
        .map(|&(dim, seed)| {
            let spec = GeneratorSpec {
                constraint_count: plan.constraint_count,
                ..GeneratorSpec::new(dim, seed)
            };
            let result = generate(&spec).map_err(|e| e.to_string()).and_then(|inst| {
                let path = dir.join(format!("instance_m{dim}_seed{seed}.json"));
                inst.save(&path, Some(&spec))
                    .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
                Ok(inst)
            });
            ((dim, seed), result)
        })
        .collect()
}

fn execute_run(
    plan: &BenchPlan,
    spec: &RunSpec,
    instances: &InstanceMap,
    trace_dir: &Path,
) -> RunOutcome {
    let mut row = SummaryRow::new(spec);
    let inst = match &instances[&(spec.dim, spec.seed)] {
        Ok(inst) => inst,
        Err(e) => {
            row.error = format!("instance: {e}");
            return RunOutcome {
                spec: *spec,
                row,
                trace: None,
            };
        }
    };
    let cfg = SolverConfig {
        method: spec.method,
        lambda0: spec.lambda0.unwrap_or(plan.solver.lambda0),
        ..plan.solver.clone()
    };
    let trace = match solve(inst, &cfg) {
        Ok(t) => {
            row.status = t.terminal_status.to_string();
            match solution_certificate(inst, &t.final_point, CERTIFICATE_TOL) {
                Ok(c) => row.certificate = Some(c),
                Err(e) => row.error = format!("certificate: {e}"),
            }
            t
        }
        Err(SolverError::Qp {
            iteration,
            source,
            partial,
        }) => {
            row.error = format!("subproblem failed at iteration {iteration}: {source}");
            *partial
        }
        Err(e) => {
            row.error = e.to_string();
            return RunOutcome {
                spec: *spec,
                row,
                trace: None,
            };
        }
    };
    row.fill_from_trace(&trace, plan.tol);
    let path = trace_dir.join(spec.trace_name());
    match fs::write(&path, trace.to_csv()) {
        Ok(()) => row.trace_file = format!("traces/{}", spec.trace_name()),
        Err(e) => row.error = format!("cannot write {}: {e}", path.display()),
    }
    RunOutcome {
        spec: *spec,
        row,
        trace: Some(trace),
    }
}

fn write_summary<'a>(
    path: &Path,
    rows: impl Iterator<Item = &'a SummaryRow>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io("cannot write", path, e))?;
    for row in rows {
        w.serialize(row)
            .map_err(|e| CliError::io("cannot write", path, e))?;
    }
    w.flush().map_err(|e| CliError::io("cannot write", path, e))
}

/// Two charts per `(dim, seed)`; returns the number of files written.
fn write_plots(plan: &BenchPlan, outcomes: &[RunOutcome], dir: &Path) -> Result<usize, CliError> {
    let mut written = 0;
    for &dim in &plan.dims {
        for &seed in &plan.seeds {
            let group: Vec<&RunOutcome> = outcomes
                .iter()
                .filter(|o| {
                    o.spec.dim == dim
                        && o.spec.seed == seed
                        && o.trace.as_ref().is_some_and(|t| !t.records.is_empty())
                })
                .collect();
            for (suffix, x_label, by_time) in [
                ("iterations", "iterations", false),
                ("time", "elapsed seconds", true),
            ] {
                let series: Vec<Series> = group
                    .iter()
                    .map(|o| Series {
                        label: o.spec.label(),
                        points: o
                            .trace
                            .as_ref()
                            .map(|t| {
                                t.records
                                    .iter()
                                    .map(|r| {
                                        (
                                            if by_time {
                                                r.elapsed_seconds
                                            } else {
                                                r.n as f64
                                            },
                                            r.d_n,
                                        )
                                    })
                                    .collect()
                            })
                            .unwrap_or_default(),
                    })
                    .collect();
                let title = format!("D_n versus {x_label}, m = {dim}, seed {seed}");
                let path = dir.join(format!("m{dim}_seed{seed}_{suffix}.svg"));
                fs::write(&path, plot::render(&title, x_label, &series))
                    .map_err(|e| CliError::io("cannot write", &path, e))?;
                written += 1;
            }
        }
    }
    Ok(written)
}
