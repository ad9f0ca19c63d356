//! Sweep the observation noise of the Navier–Stokes 3DVar experiment with
//! β/σ² held fixed. The error level and its bound both shrink with σ.

use std::path::Path;

use da_core::harness::{sweep, ExperimentConfig};

fn main() -> da_core::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let mut cfg = ExperimentConfig::load(&root.join("examples/3dvar_nse.toml"))?;
    cfg.replicas = 2;
    cfg.time.horizon = 200.0;
    let out = std::env::temp_dir().join("da_sigma_sweep");
    let values: Vec<String> = ["0.2", "0.1", "0.05", "0.025"].map(String::from).to_vec();
    for cell in sweep(&cfg, "sigma", &values, &out)? {
        match cell.outcome {
            Ok(s) => println!(
                "sigma = {:<6} limsup |e|² = {:.4e}  bound = {:.4e}  guaranteed = {:?}",
                cell.value,
                s.limsup.map_or(f64::NAN, |l| l.limsup),
                s.bound.unwrap_or(f64::NAN),
                s.guaranteed
            ),
            Err(e) => println!("sigma = {:<6} failed: {e}", cell.value),
        }
    }
    println!("runs and report.csv in {}", out.display());
    Ok(())
}
