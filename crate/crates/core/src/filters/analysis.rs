//! Discrete-time analysis steps (dense linear algebra, small systems).

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::covariance::ensemble_mean;
use crate::error::{ensure_len, Error, Result};
use crate::observations::condition_number;

/// Innovation covariances above this condition number are rejected.
const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug)]
pub struct Posterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub gain: DMatrix<f64>,
}

fn spd_factor(m: &DMatrix<f64>, what: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let cond = condition_number(m);
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::LinearAlgebra { reason: format!("{what} is singular or ill-conditioned"), condition: cond });
    }
    m.clone().cholesky().ok_or_else(|| Error::LinearAlgebra { reason: format!("{what} is not positive definite"), condition: cond })
}

/// 𝒦 = Ĉ O*(O Ĉ O* + Γ)⁻¹.
pub fn kalman_gain(c_hat: &DMatrix<f64>, o: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_len("covariance", c_hat.ncols(), o.ncols())?;
    ensure_len("Γ", gamma.nrows(), o.nrows())?;
    spd_factor(gamma, "Γ")?;
    let s = o * c_hat * o.transpose() + gamma;
    let chol = spd_factor(&s, "innovation covariance")?;
    // (S⁻¹ O Ĉ)ᵀ = Ĉ Oᵀ S⁻¹ for symmetric Ĉ and S
    Ok(chol.solve(&(o * c_hat)).transpose())
}

/// Mean/covariance update m = m̂ + 𝒦(y − O m̂), C = (I − 𝒦O)Ĉ.
pub fn kalman_update(m_hat: &DVector<f64>, c_hat: &DMatrix<f64>, o: &DMatrix<f64>, gamma: &DMatrix<f64>, y: &DVector<f64>) -> Result<Posterior> {
    ensure_len("observation", y.len(), o.nrows())?;
    let gain = kalman_gain(c_hat, o, gamma)?;
    let mean = m_hat + &gain * (y - o * m_hat);
    let d = c_hat.nrows();
    let cov = (DMatrix::identity(d, d) - &gain * o) * c_hat;
    Ok(Posterior { mean, cov: (&cov + cov.transpose()) * 0.5, gain })
}

fn anomalies(members: &[DVector<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if members.len() < 2 {
        return Err(Error::DegenerateEnsemble(format!("need at least 2 members, got {}", members.len())));
    }
    let mean = ensemble_mean(members)?;
    let cols: Vec<DVector<f64>> = members.iter().map(|m| m - &mean).collect();
    Ok((mean, DMatrix::from_columns(&cols)))
}

/// EnKF analysis with perturbed observations y + ξ_k. `c_hat` defaults to
/// the forecast ensemble covariance; pass an inflated/localized one to
/// override it.
pub fn enkf_analysis(
    forecast: &[DVector<f64>],
    o: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    y: &DVector<f64>,
    perturbations: &[DVector<f64>],
    c_hat: Option<&DMatrix<f64>>,
) -> Result<Vec<DVector<f64>>> {
    ensure_len("perturbations", perturbations.len(), forecast.len())?;
    let (_, s) = anomalies(forecast)?;
    let own;
    let c = match c_hat {
        Some(c) => c,
        None => {
            own = &s * s.transpose() / forecast.len() as f64;
            &own
        }
    };
    let gain = kalman_gain(c, o, gamma)?;
    Ok(forecast.iter().zip(perturbations).map(|(m, xi)| m + &gain * (y + xi - o * m)).collect())
}

#[derive(Clone, Debug)]
pub struct SquareRootAnalysis {
    pub members: Vec<DVector<f64>>,
    /// Forecast anomalies Ŝ (d × K), columns m̂_k − m̂̄.
    pub s_hat: DMatrix<f64>,
    /// T = (I + (1/K) Ŝᵀ Oᵀ Γ⁻¹ O Ŝ)^{-1/2}.
    pub transform: DMatrix<f64>,
    pub gain: DMatrix<f64>,
}

/// EnSRKF analysis: the mean gets the Kalman update, the anomalies are
/// transformed deterministically, S = Ŝ T.
pub fn ensrkf_analysis(forecast: &[DVector<f64>], o: &DMatrix<f64>, gamma: &DMatrix<f64>, y: &DVector<f64>) -> Result<SquareRootAnalysis> {
    let k = forecast.len();
    let (mean, s_hat) = anomalies(forecast)?;
    let c_hat = &s_hat * s_hat.transpose() / k as f64;
    let gain = kalman_gain(&c_hat, o, gamma)?;
    let chol = spd_factor(gamma, "Γ")?;
    let whitened = chol.l().solve_lower_triangular(&(o * &s_hat)).ok_or_else(|| Error::LinearAlgebra {
        reason: "Γ factor is singular".into(),
        condition: f64::INFINITY,
    })?;
    let m = DMatrix::identity(k, k) + whitened.transpose() * &whitened / k as f64;
    let eig = SymmetricEigen::new((&m + m.transpose()) * 0.5);
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.powf(-0.5)));
    let transform = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    let new_mean = &mean + &gain * (y - o * &mean);
    let s = &s_hat * &transform;
    let members = (0..k).map(|j| &new_mean + s.column(j)).collect();
    Ok(SquareRootAnalysis { members, s_hat, transform, gain })
}

/// Relative residual of Ŝ T (Ŝ T)ᵀ = K (I − 𝒦 O) Ĉ.
pub fn square_root_residual(a: &SquareRootAnalysis, o: &DMatrix<f64>) -> f64 {
    let k = a.s_hat.ncols() as f64;
    let d = a.s_hat.nrows();
    let c_hat = &a.s_hat * a.s_hat.transpose() / k;
    let st = &a.s_hat * &a.transform;
    let lhs = &st * st.transpose();
    let rhs = (DMatrix::identity(d, d) - &a.gain * o) * &c_hat * k;
    (&lhs - &rhs).norm() / rhs.norm().max(lhs.norm()).max(f64::MIN_POSITIVE)
}
