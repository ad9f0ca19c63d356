//! EnKF on Lorenz 96 at additive inflation mu ∈ {0, threshold, 2 × threshold},
//! where the threshold (2/3)c_L²σ²M_u²/ν is where the rate γ reaches zero.
//! Each cell records its condition flags and whether the bound held.

use std::path::Path;

use da_core::harness::{preflight, sweep, ExperimentConfig, Model};

fn main() -> da_core::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let mut cfg = ExperimentConfig::load(&root.join("examples/enkf_l96.toml"))?;
    cfg.filter.gain = None;
    cfg.filter.mu = Some(0.0);
    let pre = preflight(&cfg)?;
    let nu = Model::build(&cfg.system)?.sys().viscosity();
    let sigma = cfg.observation.sigma;
    let threshold = 2.0 / 3.0 * pre.constants.c_l.powi(2) * sigma * sigma * pre.m_u.powi(2) / nu;
    println!("threshold mu = {threshold:.5}");

    let values: Vec<String> = [0.0, threshold, 2.0 * threshold].iter().map(|m| m.to_string()).collect();
    let out = std::env::temp_dir().join("da_inflation_sweep");
    for cell in sweep(&cfg, "mu", &values, &out)? {
        let run = cell.outcome.map_err(da_core::Error::Config)?;
        let text = std::fs::read_to_string(cell.dir.join("bound_report.json"))?;
        let report: Option<da_core::diagnostics::BoundReport> = serde_json::from_str(&text)?;
        let flags = report.map(|r| r.flags.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")).unwrap_or_default();
        println!(
            "mu = {:<10.5} limsup = {:.4e}  bound = {:>10}  satisfied = {:?}  [{flags}]",
            run.mu.unwrap_or(0.0),
            run.limsup.map_or(f64::NAN, |l| l.limsup),
            run.bound.map_or("-".into(), |b| format!("{b:.4e}")),
            run.bound_satisfied
        );
    }
    Ok(())
}
