//! Monte Carlo check of the auxiliary Ornstein–Uhlenbeck process
//! dz + νAz dt = σ⁻¹ C O* dW against σ²E|z|²_V ≤ Tr(C O*O C)/(2ν).

use da_core::covariance::CovarianceOperator;
use da_core::diagnostics::ou_bound_check;
use da_core::observations::ObservationOperator;
use da_core::spectral::SpectralGrid;
use nalgebra::DVector;

fn main() -> da_core::Result<()> {
    let grid = SpectralGrid::periodic(16)?;
    let eig = DVector::from_fn(grid.dim(), |i, _| grid.eigenvalue(i));
    let (nu, sigma) = (0.5, 0.3);
    for q in [1, 4, 16, 64] {
        let op = ObservationOperator::modal_leading(&grid, q)?;
        for (label, cov) in [
            ("C = 0.7 I_h", CovarianceOperator::background(0.7, &op)?),
            ("C = (1 + A)^-1", CovarianceOperator::diagonal(eig.map(|l| 1.0 / (1.0 + l)))?),
        ] {
            let r = ou_bound_check(&eig, nu, &cov, &op, sigma, 256, 10.0, 0.01, q as u64)?;
            println!("q = {q:>3} {label:<15} estimate {:.4} ± {:.4}  bound {:.4}  {}", r.estimate, r.std_error, r.bound, if r.pass { "ok" } else { "VIOLATED" });
        }
    }
    Ok(())
}
