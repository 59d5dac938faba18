use serde_json::json;

use egra_core::{generate, EquilibriumInstance};

use crate::config;
use crate::error::CliError;
use crate::{GenerateArgs, GlobalArgs};

pub fn run(global: &GlobalArgs, args: &GenerateArgs) -> Result<(), CliError> {
    let file = config::load(global)?;
    let mut spec = file.generator;
    if let Some(d) = args.dim {
        spec.dim = d;
    }
    if let Some(l) = args.constraints {
        spec.constraint_count = l;
    }
    if let Some(s) = global.seed {
        spec.seed = s;
    }
    if args.strongly_monotone {
        spec.strongly_monotone = true;
    }
    if let Some(g) = args.strong_gap {
        spec.strong_gap = g;
    }
    let inst = generate(&spec)?;

    let dir = config::output_dir(global)?;
    let name = args
        .name
        .clone()
        .unwrap_or_else(|| format!("instance_m{}_seed{}.json", spec.dim, spec.seed));
    let path = dir.join(name);
    inst.save(&path, Some(&spec))
        .map_err(|e| CliError::io("cannot write", &path, e))?;
    config::write_run_config(
        &dir,
        &json!({ "command": "generate", "generator": spec, "instance": path }),
    )?;

    println!("wrote {}", path.display());
    print_validator_summary(&inst);
    Ok(())
}

pub fn print_validator_summary(inst: &EquilibriumInstance) {
    let s = inst.spectral_summary();
    let (c1, _) = inst.lipschitz_constants();
    println!(
        "  dim {}, constraints {}",
        inst.dim(),
        inst.feasible().rows()
    );
    println!("  eig(Q) in [{:.6e}, {:.6e}]", s.q_min, s.q_max);
    println!(
        "  max eig(Q - P) = {:.6e}, min eig(P - Q) = {:.6e}",
        s.q_minus_p_max, s.p_minus_q_min
    );
    println!("  c1 = c2 = {c1:.6e}");
}
