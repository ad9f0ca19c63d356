//! Discrete filters with Γ = σ²/Δt against their Euler–Maruyama continuous
//! limits on one Brownian path, over a sequence of halved step sizes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{analysis, Filter};
use crate::covariance::{ensemble_cov, inflate, InflationSpec};
use crate::dynamics::{DissipativeSystem, Stepper};
use crate::error::{Error, Result};
use crate::observations::ObservationOperator;
use crate::rng::{NoisePath, StreamRole};

/// Which discrete analysis is paired with the continuous filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscreteScheme {
    Kalman,
    PerturbedObservations,
    SquareRoot,
}

impl DiscreteScheme {
    pub fn for_filter(filter: &Filter) -> Result<Self> {
        match filter {
            Filter::ThreeDVar { .. } => Ok(DiscreteScheme::Kalman),
            Filter::Enkf { .. } => Ok(DiscreteScheme::PerturbedObservations),
            Filter::Ensrkf { inflation, .. } if *inflation == InflationSpec::default() => Ok(DiscreteScheme::SquareRoot),
            Filter::Ensrkf { .. } => Err(Error::UnsupportedOperator("the square-root analysis has no inflated form".into())),
            Filter::Nudging { .. } => Err(Error::UnsupportedOperator("nudging has no discrete analysis".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub scheme: DiscreteScheme,
    pub dts: Vec<f64>,
    /// sup over steps and members of ‖m_discrete − m_continuous‖_H.
    pub differences: Vec<f64>,
    pub order: f64,
    pub monotone: bool,
}

/// Least-squares slope of log(difference) against log(Δt).
pub fn fit_order(dts: &[f64], diffs: &[f64]) -> f64 {
    let n = dts.len() as f64;
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = diffs.iter().map(|d| d.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Run both forms at Δt = `coarse_dt`/2^r for r = 0..=`halvings`, with noise
/// increments aggregated from the finest level.
#[allow(clippy::too_many_arguments)]
pub fn continuum_consistency<S: DissipativeSystem + ?Sized>(
    sys: &S,
    op: &ObservationOperator,
    filter: &Filter,
    u0: &DVector<f64>,
    init: &[DVector<f64>],
    coarse_dt: f64,
    halvings: usize,
    horizon: f64,
    seed: u64,
) -> Result<ConsistencyReport> {
    let scheme = DiscreteScheme::for_filter(filter)?;
    let q = op.rank();
    let fine_dt = coarse_dt / (1u64 << halvings) as f64;
    let shared_path = NoisePath::new(seed, StreamRole::ObservationNoise, q, fine_dt);
    let member_path = NoisePath::new(seed, StreamRole::FilterNoise, q, fine_dt);
    let o = op.matrix();
    let sigma = filter.sigma();
    let mut dts = Vec::new();
    let mut diffs = Vec::new();
    for r in 0..=halvings {
        let factor = 1usize << (halvings - r);
        let dt = fine_dt * factor as f64;
        let shared = shared_path.coarsened(factor);
        let perturb = member_path.coarsened(factor);
        let stepper = Stepper::new(sys, dt)?;
        let steps = (horizon / dt).round() as u64;
        let gamma = DMatrix::identity(q, q) * (sigma * sigma / dt);
        let mut u = u0.clone();
        let mut em: Vec<DVector<f64>> = init.to_vec();
        let mut disc: Vec<DVector<f64>> = init.to_vec();
        let mut sup = 0.0f64;
        for j in 0..steps {
            let t = j as f64 * dt;
            let dw = shared.increment(0, j);
            let db: Vec<DVector<f64>> = (0..init.len()).map(|k| perturb.increment(k as u64, j)).collect();
            let observed = op.observe(&u)?;
            em = filter.step(sys, &stepper, op, t, &em, &observed, &dw, &db)?;
            let u_next = stepper.step(sys, t, &u, None)?;
            let y = op.observe(&u_next)? + &dw * (sigma / dt);
            let forecast: Vec<DVector<f64>> = disc.iter().map(|m| stepper.forecast(sys, t, m)).collect();
            disc = match (scheme, filter) {
                (DiscreteScheme::Kalman, Filter::ThreeDVar { cov, .. }) => {
                    let gain = analysis::kalman_gain(&cov.to_dense(), &o, &gamma)?;
                    vec![&forecast[0] + gain * (&y - &o * &forecast[0])]
                }
                (DiscreteScheme::PerturbedObservations, Filter::Enkf { inflation, .. }) => {
                    let c = inflate(&ensemble_cov(&forecast)?, inflation, op.kernel_projector())?.to_dense();
                    let xi: Vec<DVector<f64>> = db.iter().map(|b| b * (sigma / dt)).collect();
                    analysis::enkf_analysis(&forecast, &o, &gamma, &y, &xi, Some(&c))?
                }
                (DiscreteScheme::SquareRoot, _) => analysis::ensrkf_analysis(&forecast, &o, &gamma, &y)?.members,
                _ => unreachable!("scheme matches filter"),
            };
            u = u_next;
            for (a, b) in em.iter().zip(&disc) {
                sup = sup.max((a - b).norm());
            }
        }
        dts.push(dt);
        diffs.push(sup);
    }
    let order = fit_order(&dts, &diffs);
    let monotone = diffs.windows(2).all(|w| w[1] < w[0]);
    Ok(ConsistencyReport { scheme, dts, differences: diffs, order, monotone })
}
