//! Calibrate the inequality constants for a configuration and evaluate the
//! conditions of its accuracy bound before running anything.

use std::path::PathBuf;

use da_core::harness::{preflight, ExperimentConfig};

fn main() -> da_core::Result<()> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/3dvar_nse.toml"));
    let cfg = ExperimentConfig::load(&path)?;
    let pre = preflight(&cfg)?;
    let c = &pre.constants;
    println!("{}: c1 = {:.4}, c2 = {:.4}, c_L = {:.4}, h = {:.4}, M_u ≈ {:.4}", path.display(), c.c1, c.c2, c.c_l, c.h, pre.m_u);
    match &pre.report {
        Some(r) => print!("{}", r.table()),
        None => println!("no accuracy bound applies to this filter"),
    }
    Ok(())
}
