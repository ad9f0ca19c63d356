//! Constants, theorem conditions and bounds, and the empirical estimators
//! they are compared against.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::covariance::{trace_c_ih_c, CovarianceOperator};
use crate::dynamics::{trilinear_constant, DissipativeSystem};
use crate::error::{Error, Result};
use crate::observations::ObservationOperator;
use crate::rng::{NoisePath, StreamKey, StreamRole};
use crate::spectral::{RandomSpectrum, SpectralField, SpectralGrid};

/// Smallest admissible corpus for calibration.
pub const MIN_CORPUS: usize = 500;

/// Random smooth fields used to calibrate inequality constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub size: usize,
    pub seed: u64,
    /// Spectral slopes are drawn uniformly from this range, so the corpus
    /// mixes rough and smooth fields.
    pub slope_min: f64,
    pub slope_max: f64,
}

impl CorpusSpec {
    pub fn new(size: usize, seed: u64) -> Self {
        Self { size, seed, slope_min: 0.5, slope_max: 4.0 }
    }

    /// Field `i` of the corpus; depends only on (seed, i).
    pub fn field(&self, grid: &SpectralGrid, i: usize) -> DVector<f64> {
        let mut rng = StreamKey::new(self.seed, StreamRole::Corpus, i as u64, 0).rng();
        let u: f64 = rand::Rng::random(&mut rng);
        let slope = self.slope_min + (self.slope_max - self.slope_min) * u;
        RandomSpectrum { slope, k2_cut: i64::MAX }.coords(grid, &mut rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub c1: f64,
    pub c2: f64,
    pub c_l: f64,
    pub h: f64,
    pub corpus: Option<CorpusSpec>,
}

/// ‖u − P_{K⊥}u‖_H / (h‖u‖_V).
pub fn tail_ratio(op: &ObservationOperator, grid: &SpectralGrid, u: &DVector<f64>) -> Result<f64> {
    let tail = (u - op.kernel_projection(u)?).norm();
    Ok(tail / (op.h() * v_norm(grid, u)))
}

/// ‖u − I_h u‖_H / (h‖u‖_V).
pub fn interpolation_ratio(op: &ObservationOperator, grid: &SpectralGrid, u: &DVector<f64>) -> Result<f64> {
    let tail = (u - op.interpolate(u)?).norm();
    Ok(tail / (op.h() * v_norm(grid, u)))
}

fn v_norm(grid: &SpectralGrid, u: &DVector<f64>) -> f64 {
    (0..u.len()).map(|i| grid.eigenvalue(i) * u[i] * u[i]).sum::<f64>().sqrt()
}

/// ‖u‖²_{L⁴} / (‖u‖_H‖u‖_V).
pub fn ladyzhenskaya_ratio(grid: &std::sync::Arc<SpectralGrid>, u: &DVector<f64>) -> Result<f64> {
    let f = SpectralField::from_coords(grid, u.as_slice())?;
    Ok(f.norm_l4().powi(2) / (f.norm_h() * f.norm_v()))
}

/// Smallest c₁, c₂, c_L satisfying the approximation-of-identity and
/// Ladyzhenskaya inequalities over the corpus.
pub fn calibrate_constants(grid: &std::sync::Arc<SpectralGrid>, op: &ObservationOperator, corpus: CorpusSpec) -> Result<Calibration> {
    if corpus.size < MIN_CORPUS {
        return Err(Error::InvalidParameter(format!("calibration corpus needs at least {MIN_CORPUS} fields, got {}", corpus.size)));
    }
    let (mut c1, mut c2, mut c_l) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..corpus.size {
        let u = corpus.field(grid, i);
        c1 = c1.max(op.interpolate(&u)?.norm() / u.norm());
        c2 = c2.max(tail_ratio(op, grid, &u)?);
        c_l = c_l.max(ladyzhenskaya_ratio(grid, &u)?);
    }
    Ok(Calibration { c1, c2, c_l, h: op.h(), corpus: Some(corpus) })
}

/// Constants for coordinate observations of a finite-dimensional system:
/// c₁ = c₂ = 1 with h = 1, and c_L the trilinear constant of B.
pub fn finite_dimensional_constants<S: DissipativeSystem + ?Sized>(sys: &S, seed: u64) -> Calibration {
    Calibration { c1: 1.0, c2: 1.0, c_l: trilinear_constant(sys, 32, seed), h: 1.0, corpus: None }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// I_h an orthogonal projection, general C.
    #[serde(rename = "3dvar")]
    ThreeDVar,
    /// Localized background C̃ = P C P.
    #[serde(rename = "3dvar_localized")]
    ThreeDVarLocalized,
    Enkf,
    Ensrkf,
}

/// Inputs of the condition check; calibrated constants may be missing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConditionInputs {
    pub nu: f64,
    pub lambda1: f64,
    /// Grashof number; when absent the effective value M_u/(ν√λ₁) is used.
    pub grashof: Option<f64>,
    pub sigma: f64,
    pub h: f64,
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    /// dim K⊥.
    pub q: usize,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c_l: Option<f64>,
    /// sup ‖u‖_V over the post-spin-up truth.
    pub m_u: Option<f64>,
    /// ‖P_K C P_{K⊥}‖.
    pub cross_norm: f64,
    /// Tr(C I_h C) for 3DVar.
    pub trace_cihc: Option<f64>,
    /// O*O is an orthogonal projection.
    pub projection: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub inputs: ConditionInputs,
    pub grashof_used: f64,
    /// ε = h².
    pub epsilon: f64,
    pub gamma: f64,
    pub kappa: f64,
    /// 𝔈(σ²), when γ > 0.
    pub bound: Option<f64>,
    /// Conditions required for the bound.
    pub flags: BTreeMap<String, bool>,
    /// Reported but not required.
    pub notes: BTreeMap<String, bool>,
    pub guaranteed: bool,
}

impl BoundReport {
    pub fn table(&self) -> String {
        let mut s = format!("{:?} bound report\n", self.kind);
        let i = &self.inputs;
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "-".into());
        for (name, val) in [
            ("nu", format!("{:.6e}", i.nu)),
            ("lambda1", format!("{:.6e}", i.lambda1)),
            ("G", format!("{:.6e}", self.grashof_used)),
            ("sigma", format!("{:.6e}", i.sigma)),
            ("h", format!("{:.6e}", i.h)),
            ("epsilon", format!("{:.6e}", self.epsilon)),
            ("beta", opt(i.beta)),
            ("mu", opt(i.mu)),
            ("q", i.q.to_string()),
            ("c1", opt(i.c1)),
            ("c2", opt(i.c2)),
            ("c_L", opt(i.c_l)),
            ("M_u", opt(i.m_u)),
            ("|P_K C P_K⊥|", format!("{:.6e}", i.cross_norm)),
            ("gamma", format!("{:.6e}", self.gamma)),
            ("kappa", format!("{:.6e}", self.kappa)),
            ("bound", opt(self.bound)),
        ] {
            s.push_str(&format!("  {name:<14} {val}\n"));
        }
        for (k, v) in &self.flags {
            s.push_str(&format!("  [{}] {k}\n", if *v { "x" } else { " " }));
        }
        for (k, v) in &self.notes {
            s.push_str(&format!("  ({}) {k}\n", if *v { "x" } else { " " }));
        }
        s.push_str(&format!("  guaranteed: {}\n", self.guaranteed));
        s
    }
}

fn need(x: Option<f64>, what: &str) -> Result<f64> {
    x.ok_or_else(|| Error::MissingCalibration(what.to_string()))
}

/// Evaluate the conditions, γ, κ and 𝔈(σ²) of the accuracy theorems.
pub fn check_conditions(kind: BoundKind, inputs: &ConditionInputs) -> Result<BoundReport> {
    let i = inputs;
    if !(i.sigma > 0.0 && i.nu > 0.0 && i.lambda1 > 0.0) {
        return Err(Error::InvalidParameter("σ, ν and λ₁ must be positive".into()));
    }
    let c_l = need(i.c_l, "c_L")?;
    let c2 = need(i.c2, "c2")?;
    let s2 = i.sigma * i.sigma;
    let eps = i.h * i.h;
    let mut flags = BTreeMap::new();
    let mut notes = BTreeMap::new();
    let grashof_used = match (i.grashof, i.m_u) {
        (Some(g), _) => g,
        (None, Some(m)) => m / (i.nu * i.lambda1.sqrt()),
        (None, None) => return Err(Error::MissingCalibration("Grashof number or M_u".into())),
    };
    let forcing_term = c_l * c_l * i.nu * i.lambda1 * grashof_used * grashof_used;
    let (gamma, kappa, bound) = match kind {
        BoundKind::ThreeDVar | BoundKind::ThreeDVarLocalized => {
            let beta = need(i.beta, "beta")?;
            let b = beta / s2;
            let trace = need(i.trace_cihc, "Tr(C I_h C)")?;
            let (gamma, kappa) = if kind == BoundKind::ThreeDVar {
                let c1 = need(i.c1, "c1")?;
                let cross = c1 * c1 * c2 * c2 * eps * i.cross_norm.powi(2) / (s2 * s2 * i.nu);
                flags.insert("beta_upper".into(), b <= i.nu / (4.0 * c2 * c2 * eps));
                flags.insert("beta_lower".into(), b >= cross + forcing_term);
                flags.insert("projection".into(), i.projection);
                (2.0 * b - 2.0 * cross - 2.0 * forcing_term, i.nu / 2.0 - 2.0 * beta * c2 * c2 * eps / s2)
            } else {
                flags.insert("beta_upper".into(), b <= i.nu / (2.0 * c2 * c2 * eps));
                flags.insert("beta_lower".into(), b >= forcing_term);
                (2.0 * b - 2.0 * forcing_term, i.nu - 2.0 * beta * c2 * c2 * eps / s2)
            };
            (gamma, kappa, trace / (gamma * s2))
        }
        BoundKind::Enkf | BoundKind::Ensrkf => {
            let mu = need(i.mu, "mu")?;
            let m_u = need(i.m_u, "M_u")?;
            let a = mu / s2;
            let (w, lower) = if kind == BoundKind::Enkf { (1.5, 2.0 / 3.0) } else { (0.5, 2.0) };
            flags.insert("kappa_condition".into(), w * a * c2 * c2 * eps <= i.nu);
            flags.insert("inflation_lower".into(), mu >= lower * c_l * c_l * s2 * m_u * m_u / i.nu);
            flags.insert("projection".into(), i.projection);
            notes.insert("kappa_condition_eps_squared".into(), w * a * c2 * c2 * eps * eps <= i.nu);
            let gamma = w * a - c_l * c_l * m_u * m_u / i.nu;
            (gamma, i.nu - w * a * c2 * c2 * eps, mu * mu * i.q as f64 / (gamma * s2))
        }
    };
    flags.insert("gamma_positive".into(), gamma > 0.0);
    let guaranteed = flags.values().all(|&f| f);
    Ok(BoundReport {
        kind,
        inputs: inputs.clone(),
        grashof_used,
        epsilon: eps,
        gamma,
        kappa,
        bound: (gamma > 0.0).then_some(bound),
        flags,
        notes,
        guaranteed,
    })
}

/// Time-averaged enstrophy bound (1/κ)(1/(γT) + 1)·Tr(C I_h C)/σ² over a
/// window of length T; None unless γ, κ > 0.
pub fn enstrophy_bound(report: &BoundReport, window: f64) -> Option<f64> {
    let trace = report.inputs.trace_cihc?;
    (report.gamma > 0.0 && report.kappa > 0.0).then(|| (1.0 / (report.gamma * window) + 1.0) * trace / (report.kappa * report.inputs.sigma.powi(2)))
}

/// (ν/T)∫‖e‖²_V over the final `window` of a uniformly sampled series.
pub fn enstrophy_average(times: &[f64], err_v2: &[f64], nu: f64, window: f64) -> f64 {
    let end = *times.last().unwrap_or(&0.0);
    let mut acc = 0.0;
    for j in 1..times.len() {
        if times[j - 1] >= end - window - 1e-12 {
            acc += 0.5 * (err_v2[j] + err_v2[j - 1]) * (times[j] - times[j - 1]);
        }
    }
    nu * acc / window
}

pub const MIN_LIMSUP_SAMPLES: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimsupEstimate {
    /// Max windowed mean over the final half.
    pub limsup: f64,
    /// Mean over the final half.
    pub tail_mean: f64,
    pub window: usize,
}

/// Finite-horizon proxy for limsup: the largest moving mean (window 5% of
/// the series) over the final 50%.
pub fn limsup_estimate(series: &[f64]) -> Result<LimsupEstimate> {
    let n = series.len();
    if n < MIN_LIMSUP_SAMPLES {
        return Err(Error::SeriesTooShort { len: n, min: MIN_LIMSUP_SAMPLES });
    }
    crate::error::ensure_finite("series", series)?;
    let tail = &series[n / 2..];
    let w = (n / 20).max(1);
    let mut best = f64::NEG_INFINITY;
    for win in tail.windows(w) {
        best = best.max(win.iter().sum::<f64>() / w as f64);
    }
    Ok(LimsupEstimate { limsup: best, tail_mean: tail.iter().sum::<f64>() / tail.len() as f64, window: w })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuReport {
    /// Monte Carlo σ²·E‖z(T)‖²_V.
    pub estimate: f64,
    pub std_error: f64,
    /// Tr(C O*O C)/(2ν).
    pub bound: f64,
    pub paths: usize,
    pub pass: bool,
}

/// Monte Carlo check of the auxiliary process dz + νAz dt = σ⁻¹ C O* dW,
/// z(0) = 0, for A diagonal with the given eigenvalues. The exponential
/// midpoint scheme z' = E z + E^{1/2} σ⁻¹ C O* ΔW is exact in the mean and
/// second order in the variance.
#[allow(clippy::too_many_arguments)]
pub fn ou_bound_check(
    eigenvalues: &DVector<f64>,
    nu: f64,
    cov: &CovarianceOperator,
    op: &ObservationOperator,
    sigma: f64,
    paths: usize,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<OuReport> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("σ must be positive, got {sigma}")));
    }
    let steps = (horizon / dt).round() as u64;
    let e = eigenvalues.map(|l| (-nu * l * dt).exp());
    let e_half = eigenvalues.map(|l| (-0.5 * nu * l * dt).exp());
    let noise = NoisePath::new(seed, StreamRole::Auxiliary, op.rank(), dt);
    let samples: Vec<f64> = {
        use rayon::prelude::*;
        (0..paths)
            .into_par_iter()
            .map(|p| {
                let mut z = DVector::zeros(eigenvalues.len());
                for j in 0..steps {
                    let kick = cov.apply(&op.adjoint(&noise.increment(p as u64, j)).expect("rank matches")) / sigma;
                    z = z.component_mul(&e) + kick.component_mul(&e_half);
                }
                sigma * sigma * z.iter().zip(eigenvalues.iter()).map(|(x, l)| l * x * x).sum::<f64>()
            })
            .collect()
    };
    let n = paths as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let std_error = (var / n).sqrt();
    let bound = trace_c_ih_c(cov, op) / (2.0 * nu);
    Ok(OuReport { estimate: mean, std_error, bound, paths, pass: mean <= bound + 3.0 * std_error })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub tail: LimsupEstimate,
    /// 2𝔈(σ²), when available.
    pub bound: Option<f64>,
    /// Exponential contraction rate fitted over the transient (positive when
    /// the runs converge).
    pub rate: f64,
    pub pass: Option<bool>,
}

/// Compare the tail of E‖m¹ − m²‖² with 2𝔈(σ²). Both runs must share their
/// noise lineage.
pub fn stability_check<L: PartialEq + std::fmt::Debug>(
    lineage: (&L, &L),
    times: &[f64],
    distance2: &[f64],
    bound: Option<f64>,
) -> Result<StabilityReport> {
    if lineage.0 != lineage.1 {
        return Err(Error::InvalidComparison(format!("noise lineages differ: {:?} vs {:?}", lineage.0, lineage.1)));
    }
    crate::error::ensure_len("distance series", distance2.len(), times.len())?;
    let tail = limsup_estimate(distance2)?;
    // least-squares slope of log distance over the first quarter
    let n = (times.len() / 4).max(2);
    let pts: Vec<(f64, f64)> = times[..n].iter().zip(&distance2[..n]).filter(|(_, d)| **d > 0.0).map(|(t, d)| (*t, 0.5 * d.ln())).collect();
    let rate = if pts.len() < 2 {
        f64::INFINITY
    } else {
        let m = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        -sxy / sxx
    };
    Ok(StabilityReport { tail, bound, rate, pass: bound.map(|b| tail.limsup <= b) })
}
