//! `egra`: generate equilibrium instances, solve them, benchmark the solvers
//! and estimate convergence rates.

mod bench;
mod config;
mod error;
mod generate;
mod plot;
mod rate;
mod solve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use egra_core::Method;

#[derive(Debug, Parser)]
#[command(
    name = "egra",
    version,
    about = "Golden ratio extragradient solvers for equilibrium problems"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command. Flags override the config file, which
/// overrides built-in defaults.
#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON file with `solver`, `generator` and `bench` sections.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    pub output: Option<PathBuf>,
    /// Seed for instance generation and start-point sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Stop once `D_n <= tol`.
    #[arg(long, global = true, value_parser = positive_f64)]
    pub tol: Option<f64>,
    /// Iteration cap, counted in trace rows.
    #[arg(long = "max-iter", global = true, value_parser = positive_usize)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a random instance as JSON.
    Generate(GenerateArgs),
    /// Run one solver on an instance file and write its trace.
    Solve(SolveArgs),
    /// Run a grid of dimensions, methods, stepsizes and seeds.
    Bench(BenchArgs),
    /// Estimate EGRA's convergence rate on an instance.
    Rate(RateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    /// Dimension m of the variable.
    #[arg(long, value_parser = positive_usize)]
    pub dim: Option<usize>,
    /// Number of random inequality rows.
    #[arg(long, value_parser = positive_usize)]
    pub constraints: Option<usize>,
    /// Keep the spectrum of `P - Q` at or above `--strong-gap`.
    #[arg(long)]
    pub strongly_monotone: bool,
    /// Lower bound on the spectrum of `P - Q` (default 0.1).
    #[arg(long, value_parser = positive_f64)]
    pub strong_gap: Option<f64>,
    /// File name inside the output directory.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Initial stepsize.
    #[arg(long, value_parser = positive_f64)]
    pub lambda0: Option<f64>,
    /// Stepsize safety factor, below half the golden ratio.
    #[arg(long, value_parser = positive_f64)]
    pub mu: Option<f64>,
    /// KKT tolerance of the inner QP solver.
    #[arg(long, value_parser = positive_f64)]
    pub qp_tol: Option<f64>,
    /// The fixed `λ` of the `D_n` diagnostic.
    #[arg(long, value_parser = positive_f64)]
    pub d_metric_lambda: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    /// Instance JSON written by `generate`.
    pub instance: PathBuf,
    /// EGRA, LEGM or ErgM.
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',', value_parser = positive_usize)]
    pub dims: Option<Vec<usize>>,
    /// Comma-separated subset of EGRA, LEGM, ErgM.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Initial stepsizes for EGRA and LEGM; a bare `--lambda0` means a one-value sweep.
    #[arg(long, value_delimiter = ',', value_parser = positive_f64)]
    pub lambda0_sweep: Option<Vec<f64>>,
    /// Defaults to `--seed` when given.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Constraint rows per generated instance.
    #[arg(long, value_parser = positive_usize)]
    pub constraints: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RateArgs {
    /// Instance JSON, ideally generated with `--strongly-monotone`.
    pub instance: PathBuf,
    /// Strong-monotonicity modulus to check for; defaults to the generator's gap.
    #[arg(long, value_parser = positive_f64)]
    pub delta: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Replace the solver run by `x_n = x_ref + ratio^n v` (testing aid).
    #[arg(long, hide = true, value_parser = positive_f64)]
    pub synthetic_geometric: Option<f64>,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("{v} is not a positive finite number")),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => generate::run(&cli.global, args),
        Command::Solve(args) => solve::run(&cli.global, args),
        Command::Bench(args) => bench::run(&cli.global, args),
        Command::Rate(args) => rate::run(&cli.global, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
