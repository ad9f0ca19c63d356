//! Nudging on 2D Navier–Stokes: relax the estimate toward the observed low
//! modes with gain mu and watch the unobserved modes synchronize.

use da_core::harness::{execute, ExperimentConfig};

const CONFIG: &str = r#"
name = "nudging_nse"
replicas = 2

[system]
kind = "navier_stokes"
n = 32
nu = 0.1
grashof = 15.0
shell = 2

[observation]
sigma = 0.01
operator = { kind = "modal", k2_cut = 16 }

[filter]
kind = "nudging"
mu = 5.0
init_spread = 1.0

[time]
dt = 0.05
horizon = 40.0
spin_up = 100.0
record_every = 20
"#;

fn main() -> da_core::Result<()> {
    let cfg = ExperimentConfig::from_toml(CONFIG)?;
    let run = execute(&cfg)?;
    println!("{:>8} {:>12} {:>12}", "t", "|e|²_H", "|e|²_V");
    for row in &run.series {
        println!("{:>8.1} {:>12.4e} {:>12.4e}", row.t, row.err_h2, row.err_v2);
    }
    Ok(())
}
