//! Continuous-time 3DVar, EnKF, EnSRKF and nudging filters, their discrete
//! analysis counterparts, and the error-equation integrators used to check
//! them.
//!
//! Every filter step is Lie-split: the deterministic model step Ψ_dt (the
//! same integrating-factor scheme that advances the truth) followed by an
//! explicit Euler–Maruyama update of the control drift and the noise,
//!
//!   m' = Ψ_dt(m) − (dt/σ²)·C O*(O m − O u) + σ⁻¹·C O* ΔW,
//!
//! so a vanishing covariance reproduces the truth exactly.

mod analysis;
mod continuum;
mod runner;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{ensemble_cov, ensemble_mean, inflate, CovarianceOperator, InflationSpec};
use crate::dynamics::{DissipativeSystem, Stepper};
use crate::error::{ensure_len, Error, Result};
use crate::observations::ObservationOperator;

pub use analysis::{enkf_analysis, ensrkf_analysis, kalman_gain, kalman_update, square_root_residual, Posterior, SquareRootAnalysis};
pub use continuum::{continuum_consistency, fit_order, ConsistencyReport, DiscreteScheme};
pub use runner::{run_pairs, run_replicas, FilterRecord, PairOutcome, PairRun, ReplicaOutcome, ReplicaRun, Streams, TruthSample, TwinSetup};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    #[serde(rename = "3dvar")]
    ThreeDVar,
    Enkf,
    Ensrkf,
    Nudging,
}

impl FilterKind {
    pub fn is_ensemble(self) -> bool {
        matches!(self, FilterKind::Enkf | FilterKind::Ensrkf)
    }
}

/// A configured filter; the state it acts on is a list of members (one for
/// 3DVar and nudging).
#[derive(Clone, Debug)]
pub enum Filter {
    ThreeDVar { cov: CovarianceOperator, sigma: f64 },
    Enkf { sigma: f64, inflation: InflationSpec },
    Ensrkf { sigma: f64, inflation: InflationSpec },
    Nudging { mu: f64, sigma: f64 },
}

impl Filter {
    pub fn three_dvar(cov: CovarianceOperator, sigma: f64) -> Result<Self> {
        positive_sigma(sigma)?;
        Ok(Filter::ThreeDVar { cov, sigma })
    }

    pub fn enkf(sigma: f64, inflation: InflationSpec) -> Result<Self> {
        positive_sigma(sigma)?;
        inflation.validate()?;
        Ok(Filter::Enkf { sigma, inflation })
    }

    pub fn ensrkf(sigma: f64, inflation: InflationSpec) -> Result<Self> {
        positive_sigma(sigma)?;
        inflation.validate()?;
        Ok(Filter::Ensrkf { sigma, inflation })
    }

    /// Nudging gain μ > 0; σ = 0 gives deterministic nudging.
    pub fn nudging(mu: f64, sigma: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidParameter(format!("nudging gain must be positive, got {mu}")));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("nudging noise level must be ≥ 0, got {sigma}")));
        }
        Ok(Filter::Nudging { mu, sigma })
    }

    pub fn kind(&self) -> FilterKind {
        match self {
            Filter::ThreeDVar { .. } => FilterKind::ThreeDVar,
            Filter::Enkf { .. } => FilterKind::Enkf,
            Filter::Ensrkf { .. } => FilterKind::Ensrkf,
            Filter::Nudging { .. } => FilterKind::Nudging,
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            Filter::ThreeDVar { sigma, .. } | Filter::Enkf { sigma, .. } | Filter::Ensrkf { sigma, .. } | Filter::Nudging { sigma, .. } => *sigma,
        }
    }

    pub fn inflation(&self) -> Option<&InflationSpec> {
        match self {
            Filter::Enkf { inflation, .. } | Filter::Ensrkf { inflation, .. } => Some(inflation),
            _ => None,
        }
    }

    /// Effective covariance at the current members.
    pub fn covariance(&self, op: &ObservationOperator, members: &[DVector<f64>]) -> Result<CovarianceOperator> {
        match self {
            Filter::ThreeDVar { cov, .. } => Ok(cov.clone()),
            Filter::Enkf { inflation, .. } | Filter::Ensrkf { inflation, .. } => {
                inflate(&ensemble_cov(members)?, inflation, op.kernel_projector())
            }
            Filter::Nudging { .. } => Err(Error::UnsupportedOperator("nudging has no covariance".into())),
        }
    }

    /// One filter step for all members. `shared` is the observation-noise
    /// increment; `perturbations` the per-member increments (EnKF only).
    #[allow(clippy::too_many_arguments)]
    pub fn step<S: DissipativeSystem + ?Sized>(
        &self,
        sys: &S,
        stepper: &Stepper,
        op: &ObservationOperator,
        t: f64,
        members: &[DVector<f64>],
        observed: &DVector<f64>,
        shared: &DVector<f64>,
        perturbations: &[DVector<f64>],
    ) -> Result<Vec<DVector<f64>>> {
        match self {
            Filter::ThreeDVar { cov, sigma } => {
                one_member(members)?;
                Ok(vec![step_3dvar(sys, stepper, op, t, &members[0], cov, *sigma, observed, shared)?])
            }
            Filter::Enkf { sigma, inflation } => step_enkf(sys, stepper, op, t, members, *sigma, inflation, observed, shared, perturbations),
            Filter::Ensrkf { sigma, inflation } => step_ensrkf(sys, stepper, op, t, members, *sigma, inflation, observed, shared),
            Filter::Nudging { mu, sigma } => {
                one_member(members)?;
                Ok(vec![step_nudging(sys, stepper, op, t, &members[0], *mu, *sigma, observed, shared)?])
            }
        }
    }
}

fn positive_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("observation noise level must be positive, got {sigma}")))
    }
}

fn one_member(members: &[DVector<f64>]) -> Result<()> {
    if members.len() == 1 {
        Ok(())
    } else {
        Err(Error::Shape(format!("single-state filter given {} members", members.len())))
    }
}

fn check_inputs(op: &ObservationOperator, m: &DVector<f64>, observed: &DVector<f64>, shared: &DVector<f64>) -> Result<()> {
    ensure_len("filter state", m.len(), op.dim())?;
    ensure_len("observed truth", observed.len(), op.rank())?;
    ensure_len("noise increment", shared.len(), op.rank())
}

/// −(dt/σ²)·O*(O m − O u) + σ⁻¹·O* ΔW, before the covariance is applied.
fn control(op: &ObservationOperator, m: &DVector<f64>, observed: &DVector<f64>, noise: &DVector<f64>, dt: f64, sigma: f64) -> Result<DVector<f64>> {
    let innovation = op.observe(m)? - observed;
    op.adjoint(&(innovation * (-dt / (sigma * sigma)) + noise / sigma))
}

/// m' = Ψ(m) − (dt/σ²)·C O*(O m − O u) + σ⁻¹·C O* ΔW.
#[allow(clippy::too_many_arguments)]
pub fn step_3dvar<S: DissipativeSystem + ?Sized>(
    sys: &S,
    stepper: &Stepper,
    op: &ObservationOperator,
    t: f64,
    m: &DVector<f64>,
    cov: &CovarianceOperator,
    sigma: f64,
    observed: &DVector<f64>,
    dw: &DVector<f64>,
) -> Result<DVector<f64>> {
    positive_sigma(sigma)?;
    check_inputs(op, m, observed, dw)?;
    let r = control(op, m, observed, dw, stepper.dt(), sigma)?;
    Ok(stepper.forecast(sys, t, m) + cov.apply(&r))
}

/// m' = Ψ(m) − dt·μ·O*(O m − O u) + μσ·O* ΔW.
#[allow(clippy::too_many_arguments)]
pub fn step_nudging<S: DissipativeSystem + ?Sized>(
    sys: &S,
    stepper: &Stepper,
    op: &ObservationOperator,
    t: f64,
    m: &DVector<f64>,
    mu: f64,
    sigma: f64,
    observed: &DVector<f64>,
    dw: &DVector<f64>,
) -> Result<DVector<f64>> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::InvalidParameter(format!("nudging gain must be positive, got {mu}")));
    }
    check_inputs(op, m, observed, dw)?;
    let innovation = op.observe(m)? - observed;
    let kick = op.adjoint(&(innovation * (-stepper.dt() * mu) + dw * (mu * sigma)))?;
    Ok(stepper.forecast(sys, t, m) + kick)
}

fn forecasts<S: DissipativeSystem + ?Sized>(sys: &S, stepper: &Stepper, t: f64, members: &[DVector<f64>]) -> Vec<DVector<f64>> {
    members.par_iter().map(|m| stepper.forecast(sys, t, m)).collect()
}

/// EnKF: each member feels its own perturbation plus the shared increment,
///
///   m_k' = Ψ(m_k) − (dt/σ²)·C O*(O m_k − O u) + σ⁻¹·C O*(ΔW + ΔB_k),
///
/// with C the (localized, inflated) covariance of the members at the start
/// of the step.
#[allow(clippy::too_many_arguments)]
pub fn step_enkf<S: DissipativeSystem + ?Sized>(
    sys: &S,
    stepper: &Stepper,
    op: &ObservationOperator,
    t: f64,
    members: &[DVector<f64>],
    sigma: f64,
    inflation: &InflationSpec,
    observed: &DVector<f64>,
    shared: &DVector<f64>,
    perturbations: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    positive_sigma(sigma)?;
    ensure_len("perturbations", perturbations.len(), members.len())?;
    for m in members {
        check_inputs(op, m, observed, shared)?;
    }
    let cov = inflate(&ensemble_cov(members)?, inflation, op.kernel_projector())?;
    let dt = stepper.dt();
    let forecast = forecasts(sys, stepper, t, members);
    members
        .iter()
        .zip(forecast)
        .zip(perturbations)
        .map(|((m, f), db)| {
            ensure_len("perturbation", db.len(), op.rank())?;
            Ok(f + cov.apply(&control(op, m, observed, &(shared + db), dt, sigma)?))
        })
        .collect()
}

/// EnSRKF: half the innovation of each member and half that of the mean,
/// one shared increment,
///
///   m_k' = Ψ(m_k) − (dt/2σ²)·C O*(O m_k − O u) − (dt/2σ²)·C O*(O m̄ − O u) + σ⁻¹·C O* ΔW.
#[allow(clippy::too_many_arguments)]
pub fn step_ensrkf<S: DissipativeSystem + ?Sized>(
    sys: &S,
    stepper: &Stepper,
    op: &ObservationOperator,
    t: f64,
    members: &[DVector<f64>],
    sigma: f64,
    inflation: &InflationSpec,
    observed: &DVector<f64>,
    shared: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    positive_sigma(sigma)?;
    for m in members {
        check_inputs(op, m, observed, shared)?;
    }
    let cov = inflate(&ensemble_cov(members)?, inflation, op.kernel_projector())?;
    let dt = stepper.dt();
    let mean_innovation = op.observe(&ensemble_mean(members)?)? - observed;
    let forecast = forecasts(sys, stepper, t, members);
    members
        .iter()
        .zip(forecast)
        .map(|(m, f)| {
            let innovation = (op.observe(m)? - observed + &mean_innovation) * 0.5;
            let r = op.adjoint(&(innovation * (-dt / (sigma * sigma)) + shared / sigma))?;
            Ok(f + cov.apply(&r))
        })
        .collect()
}

/// Blow-up guard: ‖m‖_H above `factor × radius` is a filter divergence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceGuard {
    pub radius: f64,
    pub factor: f64,
}

impl DivergenceGuard {
    pub const DEFAULT_FACTOR: f64 = 1e3;

    pub fn new(radius: f64) -> Self {
        Self { radius, factor: Self::DEFAULT_FACTOR }
    }

    pub fn threshold(&self) -> f64 {
        self.factor * self.radius
    }

    pub fn check(&self, step: usize, members: &[DVector<f64>]) -> Result<()> {
        for m in members {
            let norm = m.norm();
            if !norm.is_finite() || norm > self.threshold() {
                return Err(Error::FilterDivergence { step, norm, guard: self.threshold() });
            }
        }
        Ok(())
    }
}

/// Ψ(u + e) − Ψ(u) evaluated on the error directly:
/// N_e = −(B(u,e) + B(e,u) + B(e,e)) through the same two stages.
pub fn forecast_error<S: DissipativeSystem + ?Sized>(sys: &S, stepper: &Stepper, t: f64, u: &DVector<f64>, e: &DVector<f64>) -> DVector<f64> {
    let dt = stepper.dt();
    let prop = stepper.propagator();
    let ne = |u: &DVector<f64>, e: &DVector<f64>| -(sys.bilinear(u, e) + sys.bilinear(e, u) + sys.bilinear(e, e));
    let n0 = sys.forcing(t) - sys.bilinear(u, u);
    let stage_u = prop.apply(&(u + &n0 * dt));
    let n0e = ne(u, e);
    let stage_e = prop.apply(&(e + &n0e * dt));
    prop.apply(&(e + n0e * (0.5 * dt))) + ne(&stage_u, &stage_e) * (0.5 * dt)
}

/// 3DVar error step: e' = Ψ_e(u, e) − (dt/σ²)·C O*O e + σ⁻¹·C O* ΔW.
#[allow(clippy::too_many_arguments)]
pub fn step_3dvar_error<S: DissipativeSystem + ?Sized>(
    sys: &S,
    stepper: &Stepper,
    op: &ObservationOperator,
    t: f64,
    u: &DVector<f64>,
    e: &DVector<f64>,
    cov: &CovarianceOperator,
    sigma: f64,
    dw: &DVector<f64>,
) -> Result<DVector<f64>> {
    let r = control(op, e, &DVector::zeros(op.rank()), dw, stepper.dt(), sigma)?;
    Ok(forecast_error(sys, stepper, t, u, e) + cov.apply(&r))
}

/// Ensemble error step with C = C(e), for either ensemble filter.
#[allow(clippy::too_many_arguments)]
pub fn step_ensemble_error<S: DissipativeSystem + ?Sized>(
    sys: &S,
    stepper: &Stepper,
    op: &ObservationOperator,
    filter: &Filter,
    t: f64,
    u: &DVector<f64>,
    errors: &[DVector<f64>],
    shared: &DVector<f64>,
    perturbations: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let cov = filter.covariance(op, errors)?;
    let sigma = filter.sigma();
    let dt = stepper.dt();
    let zero = DVector::zeros(op.rank());
    let mean_oe = op.observe(&ensemble_mean(errors)?)?;
    errors
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let r = match filter {
                Filter::Enkf { .. } => control(op, e, &zero, &(shared + &perturbations[k]), dt, sigma)?,
                Filter::Ensrkf { .. } => {
                    let innovation = (op.observe(e)? + &mean_oe) * 0.5;
                    op.adjoint(&(innovation * (-dt / (sigma * sigma)) + shared / sigma))?
                }
                _ => return Err(Error::UnsupportedOperator("not an ensemble filter".into())),
            };
            Ok(forecast_error(sys, stepper, t, u, e) + cov.apply(&r))
        })
        .collect()
}

/// Damping contributed by additive inflation on the observed subspace,
/// −(3/2)(μ/σ²)(1/K)Σ_k ‖P_{K⊥} e_k‖²; never positive.
pub fn inflation_damping(op: &ObservationOperator, errors: &[DVector<f64>], mu: f64, sigma: f64) -> f64 {
    let p = op.kernel_projector();
    let k = errors.len().max(1) as f64;
    let s: f64 = errors.iter().map(|e| p.apply(e).norm_squared()).sum();
    -1.5 * mu / (sigma * sigma) * s / k
}
