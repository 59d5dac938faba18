//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use egra_core::qp::{prox_step, qp_enumerate, qp_solve, QpProblem, DEFAULT_QP_TOL};
use egra_core::solvers::{
    descent_start, lyapunov_sequence, rate_fit, solution_certificate, solve, Method, SolverConfig,
    SolverTrace, TerminalStatus,
};
use egra_core::{
    generate, golden_ratio, nash_cournot_assemble, EquilibriumInstance, GeneratorSpec, Matrix,
    Polyhedron, Vector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;

/// Seed, instance, EGRA trace and wall time for each desk instance.
type DeskRun = (u64, EquilibriumInstance, SolverTrace, Duration);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn egra_default() -> SolverConfig {
    SolverConfig {
        lambda0: 1.0,
        mu: 0.45 * golden_ratio(),
        tol: 1e-6,
        max_iter: 5000,
        ..SolverConfig::for_method(Method::Egra)
    }
}

/// The twenty seeded instances of criterion 4 (m = 20, l = 10).
const DESK_SEEDS: std::ops::RangeInclusive<u64> = 1..=20;

fn desk_instance(seed: u64) -> EquilibriumInstance {
    generate(&GeneratorSpec {
        constraint_count: 10,
        ..GeneratorSpec::new(20, seed)
    })
    .expect("generator")
}

fn strong_instance(seed: u64) -> EquilibriumInstance {
    generate(&GeneratorSpec::strong(20, seed, 0.5)).expect("generator")
}

fn qp_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let m = rng.random_range(1..=4);
        let l = rng.random_range(1..=6);
        let a = gaussian_matrix(&mut rng, l, m);
        let x0 = gaussian_vector(&mut rng, m);
        let b = &a * &x0 + gaussian_vector(&mut rng, l).abs();
        let c = Polyhedron::new(a, b, x0).map_err(|e| e.to_string())?;
        let g = gaussian_matrix(&mut rng, m, m);
        let h = &g * g.transpose() + Matrix::identity(m, m) * 0.1;
        let p =
            QpProblem::new(h, gaussian_vector(&mut rng, m) * 3.0, &c).map_err(|e| e.to_string())?;
        let fast = qp_solve(&p, DEFAULT_QP_TOL).map_err(|e| e.to_string())?;
        let slow = qp_enumerate(&p).map_err(|e| e.to_string())?;
        worst = worst.max((&fast.point - &slow.point).amax());
    }
    let elapsed = start.elapsed();
    ensure!(worst <= 1e-6, "max inf-norm gap {worst:.2e} > 1e-6");
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!(
        "200 QPs, max inf-norm gap {worst:.2e}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn prox_characterization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = f64::INFINITY;
    for k in 0..50 {
        let inst = generate(&GeneratorSpec::new(10, 1000 + k)).map_err(|e| e.to_string())?;
        let x = inst
            .feasible()
            .sample_point(&mut rng)
            .map_err(|e| e.to_string())?;
        let z = gaussian_vector(&mut rng, 10) * 5.0;
        let lambda = rng.random_range(0.05..10.0);
        let xbar = prox_step(&inst, &x, &z, lambda, DEFAULT_QP_TOL).map_err(|e| e.to_string())?;
        let g = |y: &Vector| inst.bifunction_eval(&x, y).unwrap();
        let g_xbar = g(&xbar);
        for _ in 0..100 {
            let y = inst
                .feasible()
                .sample_point(&mut rng)
                .map_err(|e| e.to_string())?;
            let margin = (&xbar - &z).dot(&(&y - &xbar)) - lambda * (g_xbar - g(&y));
            worst = worst.min(margin);
        }
    }
    ensure!(worst >= -1e-6, "worst margin {worst:.3e} < -1e-6");
    Ok(format!(
        "50 prox points x 100 feasible points, worst margin {worst:.3e}"
    ))
}

fn convex_combination_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let m = rng.random_range(1..=30);
        let x = gaussian_vector(&mut rng, m) * 10.0;
        let y = gaussian_vector(&mut rng, m) * 10.0;
        let a: f64 = rng.random_range(-2.0..3.0);
        let lhs = (&x * a + &y * (1.0 - a)).norm_squared();
        let rhs = a * x.norm_squared() + (1.0 - a) * y.norm_squared()
            - a * (1.0 - a) * (&x - &y).norm_squared();
        let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    ensure!(worst <= 1e-9, "worst relative gap {worst:.2e}");
    Ok(format!("1000 triples, worst relative gap {worst:.2e}"))
}

fn egra_convergence(runs: &[DeskRun]) -> Check {
    let mut worst_cert = f64::INFINITY;
    let mut max_iters = 0;
    let mut slowest = Duration::ZERO;
    for (seed, inst, trace, elapsed) in runs {
        ensure!(
            trace.terminal_status == TerminalStatus::Converged,
            "seed {seed}: {}",
            trace.terminal_status
        );
        ensure!(
            trace.final_residual() <= 1e-6,
            "seed {seed}: D = {:.2e}",
            trace.final_residual()
        );
        let cert =
            solution_certificate(inst, &trace.final_point, 1e-8).map_err(|e| e.to_string())?;
        ensure!(cert >= -1e-4, "seed {seed}: certificate {cert:.3e}");
        worst_cert = worst_cert.min(cert);
        max_iters = max_iters.max(trace.iterations());
        slowest = slowest.max(*elapsed);
    }
    ensure!(
        slowest < Duration::from_secs(10),
        "slowest instance took {slowest:?}"
    );
    Ok(format!(
        "{} instances converged, at most {max_iters} iterations, worst certificate {worst_cert:.2e}, slowest {:.3}s",
        runs.len(),
        slowest.as_secs_f64()
    ))
}

fn stepsize_floor(runs: &[DeskRun]) -> Check {
    let cfg = egra_default();
    let mut tightest = f64::INFINITY;
    for (seed, inst, trace, _) in runs {
        let (c1, c2) = inst
            .certify_lipschitz(10_000, *seed)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let floor = cfg.lambda0.min(cfg.mu / (2.0 * c1.max(c2)));
        ensure!(
            trace
                .records
                .windows(2)
                .all(|w| w[1].lambda_n <= w[0].lambda_n),
            "seed {seed}: stepsize increased"
        );
        let min = trace
            .records
            .iter()
            .map(|r| r.lambda_n)
            .fold(f64::INFINITY, f64::min);
        ensure!(
            min >= floor - 1e-12,
            "seed {seed}: min lambda {min} < floor {floor}"
        );
        tightest = tightest.min(min - floor);
    }
    Ok(format!(
        "all sequences nonincreasing, smallest margin above the floor {tightest:.3e}"
    ))
}

struct RateRun {
    seed: u64,
    x_star: Vector,
    trace: SolverTrace,
}

fn rate_runs() -> Result<Vec<RateRun>, String> {
    (1..=5)
        .map(|seed| {
            let inst = strong_instance(seed);
            let reference = solve(
                &inst,
                &SolverConfig {
                    tol: 1e-12,
                    ..egra_default()
                },
            )
            .map_err(|e| e.to_string())?;
            let trace = solve(
                &inst,
                &SolverConfig {
                    tol: 1e-10,
                    keep_iterates: true,
                    ..egra_default()
                },
            )
            .map_err(|e| e.to_string())?;
            Ok(RateRun {
                seed,
                x_star: reference.final_point,
                trace,
            })
        })
        .collect()
}

fn r_linear_rate(runs: &[RateRun]) -> Check {
    let mut worst_r = 0.0_f64;
    let mut worst_r2 = 1.0_f64;
    for run in runs {
        let fit = rate_fit(&run.trace.iterates, &run.x_star).map_err(|e| e.to_string())?;
        ensure!(
            fit.r_estimate <= 0.999,
            "seed {}: r = {}",
            run.seed,
            fit.r_estimate
        );
        ensure!(
            fit.r_squared >= 0.9,
            "seed {}: R^2 = {}",
            run.seed,
            fit.r_squared
        );
        worst_r = worst_r.max(fit.r_estimate);
        worst_r2 = worst_r2.min(fit.r_squared);
    }
    Ok(format!(
        "5 instances, largest r {worst_r:.4}, smallest R^2 {worst_r2:.4}"
    ))
}

fn lyapunov_descent(runs: &[RateRun]) -> Check {
    let cfg = egra_default();
    let mut worst_n0 = 0;
    for run in runs {
        let a = lyapunov_sequence(&run.trace, &run.x_star, cfg.mu);
        ensure!(a.len() >= 2, "seed {}: too few steps", run.seed);
        // relative slack for rounding only
        let n0 = descent_start(&a, 1e-12);
        ensure!(
            n0 <= cfg.max_iter / 2,
            "seed {}: descent starts at {n0}",
            run.seed
        );
        worst_n0 = worst_n0.max(n0);
    }
    Ok(format!(
        "a_n nonincreasing from n0 <= {worst_n0} on all 5 instances (bound {})",
        egra_default().max_iter / 2
    ))
}

fn cost_accounting(runs: &[DeskRun]) -> Check {
    for (seed, inst, trace, _) in runs {
        for w in trace.records.windows(2) {
            ensure!(
                w[1].prox_calls == w[0].prox_calls + 1,
                "seed {seed}: EGRA prox count jumped at n = {}",
                w[1].n
            );
        }
        ensure!(
            trace.diagnostic_prox_calls == trace.iterations(),
            "seed {seed}: diagnostics miscounted"
        );
        let legm = solve(
            inst,
            &SolverConfig {
                max_iter: 100,
                ..SolverConfig::for_method(Method::Legm)
            },
        )
        .map_err(|e| e.to_string())?;
        for w in legm.records.windows(2) {
            ensure!(
                w[1].prox_calls > w[0].prox_calls,
                "seed {seed}: LEGM iteration without prox"
            );
            ensure!(
                w[1].f_evals > w[0].f_evals,
                "seed {seed}: LEGM iteration without linesearch"
            );
        }
    }

    // the same counts in the bench summary table
    let dir = std::env::temp_dir().join(format!("egra-acceptance-{}", std::process::id()));
    let out = Command::new(env!("CARGO_BIN_EXE_egra"))
        .args([
            "bench",
            "--dims",
            "20",
            "--seeds",
            "1",
            "--lambda0-sweep",
            "1",
            "--max-iter",
            "200",
            "--output",
        ])
        .arg(&dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "bench failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut reader = csv::Reader::from_path(dir.join("summary.csv")).map_err(|e| e.to_string())?;
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(format!("missing column {name}"))
    };
    let (method, iterations, prox, f_evals) = (
        col("method")?,
        col("iterations")?,
        col("prox_calls")?,
        col("f_evals")?,
    );
    for row in reader.records() {
        let row = row.map_err(|e| e.to_string())?;
        let n: usize = row[iterations].parse().map_err(|_| "bad iterations")?;
        let p: usize = row[prox].parse().map_err(|_| "bad prox_calls")?;
        let f: usize = row[f_evals].parse().map_err(|_| "bad f_evals")?;
        match &row[method] {
            "EGRA" => ensure!(p == n - 1, "summary: EGRA {p} prox calls over {n} rows"),
            "LEGM" => ensure!(
                p >= n - 1 && f >= n - 1,
                "summary: LEGM {p} prox, {f} f-evals over {n} rows"
            ),
            _ => {}
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok("EGRA: exactly 1 prox per iteration; LEGM: >= 1 prox and >= 1 f-evaluation per iteration; summary table agrees".into())
}

fn cournot_recovery() -> Check {
    let inst = nash_cournot_assemble(
        &[10.0; 2],
        &[1.0; 2],
        &[0.0; 2],
        &[0.0; 2],
        &[(0.0, 10.0); 2],
    )
    .map_err(|e| e.to_string())?;
    let trace = solve(
        &inst,
        &SolverConfig {
            tol: 1e-12,
            ..egra_default()
        },
    )
    .map_err(|e| e.to_string())?;
    let err = (&trace.final_point - Vector::from_element(2, 10.0 / 3.0)).amax();
    ensure!(err <= 1e-5, "inf-norm error {err:.2e}");
    Ok(format!(
        "x = ({:.8}, {:.8}), error {err:.2e} after {} iterations",
        trace.final_point[0],
        trace.final_point[1],
        trace.iterations()
    ))
}

fn stepsize_sensitivity() -> Check {
    let inst = desk_instance(DESK_SEEDS.start().to_owned());
    let counts: Vec<usize> = [0.1, 1.0, 10.0]
        .iter()
        .map(|&lambda0| {
            solve(
                &inst,
                &SolverConfig {
                    lambda0,
                    ..egra_default()
                },
            )
            .map_err(|e| e.to_string())
            .and_then(|t| {
                t.first_below(1e-6)
                    .map(|r| r.n)
                    .ok_or("did not reach tol".into())
            })
        })
        .collect::<Result<_, String>>()?;
    let (lo, hi) = (*counts.iter().min().unwrap(), *counts.iter().max().unwrap());
    let spread = (hi - lo) as f64 / hi as f64;
    ensure!(
        spread >= 0.2,
        "iterations {counts:?} differ by only {:.1}%",
        100.0 * spread
    );
    Ok(format!(
        "iterations to tol for lambda0 = 0.1, 1, 10: {counts:?} ({:.0}% spread)",
        100.0 * spread
    ))
}

/// Trace CSV without the wall-clock column.
fn deterministic_columns(csv: &str) -> String {
    csv.lines()
        .map(|l| {
            let mut cols: Vec<&str> = l.split(',').collect();
            cols.remove(3);
            cols.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn reproducibility(runs: &[DeskRun]) -> Check {
    for (seed, inst, trace, _) in runs {
        let again = desk_instance(*seed);
        ensure!(
            again.to_json(None).unwrap() == inst.to_json(None).unwrap(),
            "seed {seed}: instance bytes differ"
        );
        let rerun = solve(&again, &egra_default()).map_err(|e| e.to_string())?;
        let (a, b) = (trace.to_csv(), rerun.to_csv());
        ensure!(a.lines().next() == b.lines().next(), "headers differ");
        ensure!(
            deterministic_columns(&a) == deterministic_columns(&b),
            "seed {seed}: trace CSVs differ"
        );
    }
    Ok(format!(
        "{} instances and traces identical byte for byte (elapsed_seconds excluded)",
        runs.len()
    ))
}

fn report(results: &mut Vec<bool>, number: usize, name: &str, check: impl FnOnce() -> Check) {
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {number:>2} [{tag}] {name}: {detail}");
    results.push(outcome.is_ok());
}

fn main() -> ExitCode {
    let mut results = Vec::new();
    report(&mut results, 1, "QP oracle equivalence", qp_oracle);
    report(
        &mut results,
        2,
        "prox variational inequality",
        prox_characterization,
    );
    report(
        &mut results,
        3,
        "convex combination identity",
        convex_combination_identity,
    );

    let desk: Vec<DeskRun> = DESK_SEEDS
        .filter_map(|seed| {
            let inst = desk_instance(seed);
            let start = Instant::now();
            let trace = solve(&inst, &egra_default()).ok()?;
            Some((seed, inst, trace, start.elapsed()))
        })
        .collect();
    let all_solved = desk.len() == DESK_SEEDS.count();
    let with_desk = |f: fn(&[DeskRun]) -> Check| {
        let desk = &desk;
        move || {
            if all_solved {
                f(desk)
            } else {
                Err("a solver run returned an error".into())
            }
        }
    };
    report(
        &mut results,
        4,
        "EGRA convergence on 20 instances",
        with_desk(egra_convergence),
    );
    report(
        &mut results,
        5,
        "stepsize monotonicity and floor",
        with_desk(stepsize_floor),
    );

    let rate = rate_runs();
    report(
        &mut results,
        6,
        "R-linear rate on strongly monotone instances",
        || r_linear_rate(rate.as_ref()?),
    );
    report(&mut results, 7, "energy descent", || {
        lyapunov_descent(rate.as_ref()?)
    });
    report(
        &mut results,
        8,
        "per-iteration cost accounting",
        with_desk(cost_accounting),
    );
    report(&mut results, 9, "Cournot closed form", cournot_recovery);
    report(
        &mut results,
        10,
        "initial stepsize sensitivity",
        stepsize_sensitivity,
    );
    report(
        &mut results,
        11,
        "reproducibility",
        with_desk(reproducibility),
    );

    let passed = results.iter().filter(|ok| **ok).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
