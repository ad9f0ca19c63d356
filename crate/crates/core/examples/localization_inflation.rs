//! Ensemble covariance, localization P C P onto the observed modes, and the
//! additive inflation C_μ = ¼ P C P + μ P. Prints the trace split of
//! Tr(C_μ I_h C_μ) and the coercivity gained on the observed subspace.

use da_core::covariance::{coercivity_on, ensemble_cov, inflate, inflated_trace_terms, localize, trace_c_ih_c, InflationSpec};
use da_core::observations::ObservationOperator;
use da_core::rng::{standard_normal, StreamKey, StreamRole};
use da_core::spectral::SpectralGrid;
use nalgebra::DVector;

fn main() -> da_core::Result<()> {
    let grid = SpectralGrid::periodic(16)?;
    let op = ObservationOperator::modal(&grid, 5)?;
    let p = op.kernel_projector();
    let members: Vec<DVector<f64>> = (0..10).map(|k| standard_normal(StreamKey::new(2, StreamRole::EnsembleInit, k, 0), grid.dim())).collect();
    let c = ensemble_cov(&members)?;
    let local = localize(&c, p)?;
    println!("dim {}, observed q = {}, K = {}", grid.dim(), op.rank(), members.len());
    println!("Tr C = {:.4}, Tr PCP = {:.4}, coercivity of PCP on PH: {:.3e}", c.trace(), local.trace(), coercivity_on(&local, p));
    for mu in [0.0, 0.1, 1.0] {
        let c_mu = inflate(&c, &InflationSpec::c_mu(mu), p)?;
        let [a, b, d] = inflated_trace_terms(&local, p, mu);
        println!(
            "mu = {mu:<4} Tr(C I_h C) = {:.5}  = {a:.5} + {b:.5} + {d:.5}  coercivity {:.4}",
            trace_c_ih_c(&c_mu, &op),
            coercivity_on(&c_mu, p)
        );
    }
    Ok(())
}
