//! Effective configuration: command-line flags override the `--config` file,
//! which overrides built-in defaults. The result is echoed to
//! `run_config.json` in the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use egra_core::{GeneratorSpec, Method, SolverConfig};

use crate::error::CliError;
use crate::{GlobalArgs, SolverArgs};

pub const RUN_CONFIG_FILE: &str = "run_config.json";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub solver: SolverConfig,
    pub generator: GeneratorSpec,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub dims: Vec<usize>,
    pub methods: Vec<Method>,
    pub lambda0_sweep: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            dims: vec![100, 200, 300],
            methods: Method::ALL.to_vec(),
            lambda0_sweep: vec![0.1, 1.0, 10.0],
            seeds: vec![1],
        }
    }
}

pub fn load(global: &GlobalArgs) -> Result<FileConfig, CliError> {
    let Some(path) = &global.config else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

/// Solver settings after applying the global and per-solver flags.
pub fn solver_config(
    global: &GlobalArgs,
    file: &FileConfig,
    args: &SolverArgs,
    method: Option<Method>,
) -> Result<SolverConfig, CliError> {
    let mut cfg = file.solver.clone();
    if let Some(m) = method {
        cfg.method = m;
    }
    if let Some(v) = global.tol {
        cfg.tol = v;
    }
    if let Some(v) = global.max_iter {
        cfg.max_iter = v;
    }
    if let Some(v) = global.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.lambda0 {
        cfg.lambda0 = v;
    }
    if let Some(v) = args.mu {
        cfg.mu = v;
    }
    if let Some(v) = args.qp_tol {
        cfg.qp_tol = v;
    }
    if let Some(v) = args.d_metric_lambda {
        cfg.d_metric_lambda = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn output_dir(global: &GlobalArgs) -> Result<PathBuf, CliError> {
    let dir = global.output.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::io("cannot create output directory", &dir, e))?;
    Ok(dir)
}

pub fn write_run_config<T: Serialize>(dir: &Path, effective: &T) -> Result<(), CliError> {
    let path = dir.join(RUN_CONFIG_FILE);
    let mut text =
        serde_json::to_string_pretty(effective).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io("cannot write", &path, e))
}
