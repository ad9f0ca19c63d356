use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SystemConfig};
use crate::covariance::{cross_block_norm, trace_c_ih_c, CovarianceOperator, InflationSpec};
use crate::diagnostics::{
    calibrate_constants, check_conditions, enstrophy_average, enstrophy_bound, finite_dimensional_constants, limsup_estimate, BoundKind, BoundReport,
    Calibration, ConditionInputs, CorpusSpec, LimsupEstimate,
};
use crate::dynamics::{spin_up, DissipativeSystem, Lorenz63, Lorenz96, NavierStokes2d, SpinUpConfig, TruthTrajectory};
use crate::error::{Error, Result};
use crate::filters::{run_replicas, DivergenceGuard, Filter, FilterKind, ReplicaOutcome, ReplicaRun, Streams, TruthSample, TwinSetup};
use crate::observations::{ObservationOperator, ObservationSpec};
use crate::rng::{standard_normal, StreamKey, StreamRole};
use crate::spectral::{RandomSpectrum, SpectralGrid};

/// A concrete truth model.
pub enum Model {
    NavierStokes(NavierStokes2d),
    Lorenz63(Lorenz63),
    Lorenz96(Lorenz96),
}

impl Model {
    pub fn build(cfg: &SystemConfig) -> Result<Self> {
        Ok(match *cfg {
            SystemConfig::NavierStokes { n, length, nu, grashof, shell } => {
                Model::NavierStokes(NavierStokes2d::kolmogorov(SpectralGrid::new(n, length)?, nu, grashof, shell)?)
            }
            SystemConfig::Lorenz63 { alpha, beta, gamma, rho } => Model::Lorenz63(Lorenz63 { alpha, beta, gamma, rho, sigma1: 0.0, sigma2: 0.0 }),
            SystemConfig::Lorenz96 { n, forcing } => {
                if n < 4 {
                    return Err(Error::Config(format!("Lorenz 96 needs at least 4 variables, got {n}")));
                }
                Model::Lorenz96(Lorenz96::new(n, forcing))
            }
        })
    }

    pub fn sys(&self) -> &dyn DissipativeSystem {
        match self {
            Model::NavierStokes(s) => s,
            Model::Lorenz63(s) => s,
            Model::Lorenz96(s) => s,
        }
    }

    pub fn grid(&self) -> Option<&Arc<SpectralGrid>> {
        match self {
            Model::NavierStokes(s) => Some(s.grid()),
            _ => None,
        }
    }

    pub fn operator(&self, spec: &ObservationSpec) -> Result<ObservationOperator> {
        let dim = self.sys().dim();
        match (spec, self.grid()) {
            (ObservationSpec::Modal { k2_cut: Some(c), .. }, Some(g)) => ObservationOperator::modal(g, *c),
            (ObservationSpec::Modal { count: Some(q), .. }, Some(g)) => ObservationOperator::modal_leading(g, *q),
            (ObservationSpec::Modal { count: Some(q), .. }, None) => ObservationOperator::coordinates(dim, (0..*q).collect()),
            (ObservationSpec::Volume { cells }, Some(g)) => ObservationOperator::volume(g, *cells),
            (ObservationSpec::Coordinates { indices }, _) => ObservationOperator::coordinates(dim, indices.clone()),
            (ObservationSpec::Strided { stride, offset }, _) => ObservationOperator::strided(dim, *stride, *offset),
            (spec, _) => Err(Error::Config(format!("observation operator {spec:?} does not apply to {}", self.sys().label()))),
        }
    }

    /// Inequality constants: the corpus calibration for Navier–Stokes, with
    /// the operator's sharp values where it has them.
    pub fn constants(&self, op: &ObservationOperator, corpus: usize, seed: u64) -> Result<Calibration> {
        match self.grid() {
            Some(g) => {
                let mut cal = calibrate_constants(g, op, CorpusSpec::new(corpus, seed))?;
                if let (Some(c1), Some(c2)) = (op.c1(), op.c2()) {
                    cal.c1 = c1;
                    cal.c2 = c2;
                }
                Ok(cal)
            }
            None => Ok(finite_dimensional_constants(self.sys(), seed)),
        }
    }

    /// Initial truth before spin-up.
    pub fn initial_truth(&self, seed: u64) -> DVector<f64> {
        let key = StreamKey::new(seed, StreamRole::Truth, 0, 0);
        match self {
            Model::NavierStokes(s) => {
                let u = RandomSpectrum::default().coords(s.grid(), &mut key.rng());
                let size = s.grashof().filter(|g| *g > 0.0).map_or(1.0, |g| 0.5 * s.viscosity() * g);
                u.normalize() * size
            }
            _ => standard_normal(key, self.sys().dim()),
        }
    }

    /// Perturbation added to the truth for one initial member.
    pub fn member_perturbation(&self, seed: u64, index: u64, spread: f64) -> DVector<f64> {
        let key = StreamKey::new(seed, StreamRole::EnsembleInit, index, 0);
        match self {
            Model::NavierStokes(s) => RandomSpectrum::default().coords(s.grid(), &mut key.rng()).normalize() * spread,
            _ => standard_normal(key, self.sys().dim()) * spread,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Completed with every bound condition satisfied (or no bound applies).
    Ok,
    /// Completed, but the conditions for the bound do not all hold.
    ConditionsFalse,
    /// A replica failed for a reason other than filter divergence.
    Failed,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::ConditionsFalse => 2,
            RunStatus::Failed => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaFailure {
    pub replica: u64,
    pub message: String,
    pub diverged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub config_hash: String,
    pub system: String,
    pub filter: FilterKind,
    pub sigma: f64,
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    pub ensemble_size: usize,
    pub replicas: usize,
    pub completed: usize,
    pub diverged: usize,
    pub failures: Vec<ReplicaFailure>,
    pub spin_up_t0: f64,
    /// sup ‖u‖_V over the filtered truth trajectory.
    pub m_u: f64,
    pub grashof: Option<f64>,
    pub constants: Calibration,
    /// λ₁^{-1/2} over the rms speed (Navier–Stokes only).
    pub turnover_time: Option<f64>,
    pub horizon_turnovers: Option<f64>,
    /// Of the replica mean of ‖m − u‖²_H (ensemble filters: member average).
    pub limsup: Option<LimsupEstimate>,
    pub tail_std_error: Option<f64>,
    pub bound_kind: Option<BoundKind>,
    pub bound: Option<f64>,
    pub bound_satisfied: Option<bool>,
    pub guaranteed: Option<bool>,
    pub enstrophy_average: Option<f64>,
    pub enstrophy_bound: Option<f64>,
    pub status: RunStatus,
}

/// Replica-averaged series at one record time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub replicas: usize,
    pub err_h2: f64,
    pub err_h2_se: f64,
    pub err_v2: f64,
    pub mean_err_h2: f64,
    pub trace_cihc: f64,
    pub damping: f64,
    pub truth_h: f64,
    pub truth_v: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRow {
    pub replica: u64,
    pub records: usize,
    pub tail_mean: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub summary: RunSummary,
    pub report: Option<BoundReport>,
    pub series: Vec<SeriesRow>,
    pub replicas: Vec<ReplicaRow>,
}

/// Bound matching the filter and operator.
pub fn default_bound_kind(kind: FilterKind, op: &ObservationOperator) -> Option<BoundKind> {
    match kind {
        FilterKind::ThreeDVar if op.is_orthogonal_projection() => Some(BoundKind::ThreeDVarLocalized),
        FilterKind::ThreeDVar => Some(BoundKind::ThreeDVar),
        FilterKind::Enkf => Some(BoundKind::Enkf),
        FilterKind::Ensrkf => Some(BoundKind::Ensrkf),
        FilterKind::Nudging => None,
    }
}

pub fn build_filter(cfg: &ExperimentConfig, op: &ObservationOperator) -> Result<Filter> {
    let sigma = cfg.observation.sigma;
    let inflation = || InflationSpec { additive: cfg.mu().unwrap_or(0.0), multiplicative: cfg.filter.multiplicative, localize: cfg.filter.localize };
    match cfg.filter.kind {
        FilterKind::ThreeDVar => Filter::three_dvar(CovarianceOperator::background(cfg.beta().expect("validated"), op)?, sigma),
        FilterKind::Enkf => Filter::enkf(sigma, inflation()),
        FilterKind::Ensrkf => Filter::ensrkf(sigma, inflation()),
        FilterKind::Nudging => Filter::nudging(cfg.mu().expect("validated"), sigma),
    }
}

/// Spin up the truth of `cfg`.
pub fn spin_up_truth(cfg: &ExperimentConfig, model: &Model) -> Result<TruthTrajectory> {
    let sc = SpinUpConfig::new(cfg.time.spin_up_dt.unwrap_or(cfg.time.dt), cfg.time.spin_up);
    spin_up(model.sys(), &model.initial_truth(cfg.seeds.truth), &sc)
}

/// Spin up the truth, run every replica and evaluate the bound.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunResult> {
    cfg.validate()?;
    let model = Model::build(&cfg.system)?;
    let sys = model.sys();
    let op = model.operator(&cfg.observation.operator)?;
    let constants = model.constants(&op, cfg.calibration.corpus, cfg.calibration.seed)?;
    let filter = build_filter(cfg, &op)?;
    let truth = spin_up_truth(cfg, &model)?;

    let window_h = truth.times.iter().zip(&truth.norm_h).filter(|(t, _)| **t >= truth.t0).map(|(_, x)| *x).fold(0.0, f64::max);
    let radius = sys.absorbing_bounds().map_or(window_h, |(bh, _)| bh.sqrt()).max(f64::MIN_POSITIVE);
    let mut guard = DivergenceGuard::new(radius);
    if let Some(f) = cfg.filter.guard_factor {
        guard.factor = f;
    }
    let k = cfg.filter.ensemble_size;
    let runs: Vec<ReplicaRun> = (0..cfg.replicas as u64)
        .map(|r| ReplicaRun {
            streams: Streams::new(cfg.seeds.obs_noise, r).with_filter_seed(cfg.seeds.filter_noise),
            init: (0..k as u64).map(|m| &truth.final_state + model.member_perturbation(cfg.seeds.ensemble_init, r * k as u64 + m, cfg.filter.init_spread)).collect(),
        })
        .collect();
    let setup = TwinSetup {
        sys,
        op: &op,
        filter: &filter,
        dt: cfg.time.dt,
        steps: (cfg.time.horizon / cfg.time.dt).round() as usize,
        record_every: cfg.time.record_every,
        t0: truth.final_time,
        truth0: truth.final_state.clone(),
        guard,
    };
    let (outcomes, samples) = run_replicas(&setup, runs)?;
    let series = aggregate(&outcomes, &samples);
    let m_u = samples.iter().map(|s| s.norm_v).fold(0.0, f64::max);

    let report = match cfg.filter.bound.or(default_bound_kind(cfg.filter.kind, &op)) {
        Some(kind) => Some(bound_report(cfg, kind, sys, &op, &filter, &constants, m_u)?),
        None => None,
    };

    let errs: Vec<f64> = series.iter().map(|r| r.err_h2).collect();
    let limsup = limsup_estimate(&errs).ok();
    let replica_rows: Vec<ReplicaRow> = outcomes
        .iter()
        .map(|o| {
            let n = o.records.len();
            let tail = &o.records[n / 2..];
            ReplicaRow {
                replica: o.streams.replica,
                records: n,
                tail_mean: (!tail.is_empty()).then(|| tail.iter().map(|r| r.err_h2).sum::<f64>() / tail.len() as f64),
                failure: o.failure.clone(),
            }
        })
        .collect();
    let done: Vec<f64> = outcomes.iter().zip(&replica_rows).filter(|(o, _)| o.failure.is_none()).filter_map(|(_, r)| r.tail_mean).collect();
    let tail_std_error = (done.len() >= 2).then(|| {
        let m = done.iter().sum::<f64>() / done.len() as f64;
        (done.iter().map(|x| (x - m).powi(2)).sum::<f64>() / ((done.len() - 1) * done.len()) as f64).sqrt()
    });

    let failures: Vec<ReplicaFailure> = outcomes
        .iter()
        .filter_map(|o| o.failure.as_ref().map(|m| ReplicaFailure { replica: o.streams.replica, message: m.clone(), diverged: o.diverged }))
        .collect();
    let bound = report.as_ref().and_then(|r| r.bound);
    let guaranteed = report.as_ref().map(|r| r.guaranteed);
    let (enstrophy_avg, enstrophy_bd) = match (&report, series.len() >= 2) {
        (Some(r), true) => {
            let window = 0.5 * (series.last().unwrap().t - series[0].t);
            let times: Vec<f64> = series.iter().map(|r| r.t).collect();
            let v2: Vec<f64> = series.iter().map(|r| r.err_v2).collect();
            (Some(enstrophy_average(&times, &v2, sys.viscosity(), window)), enstrophy_bound(r, window))
        }
        _ => (None, None),
    };
    let turnover_time = model.grid().map(|g| {
        let mean_h = samples.iter().map(|s| s.norm_h).sum::<f64>() / samples.len() as f64;
        g.lambda1().powf(-0.5) * g.length() / mean_h
    });
    let status = if failures.iter().any(|f| !f.diverged) {
        RunStatus::Failed
    } else if guaranteed == Some(false) {
        RunStatus::ConditionsFalse
    } else {
        RunStatus::Ok
    };
    let summary = RunSummary {
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        system: sys.label(),
        filter: cfg.filter.kind,
        sigma: cfg.observation.sigma,
        beta: cfg.beta(),
        mu: cfg.mu(),
        ensemble_size: k,
        replicas: cfg.replicas,
        completed: outcomes.iter().filter(|o| o.failure.is_none()).count(),
        diverged: failures.iter().filter(|f| f.diverged).count(),
        failures,
        spin_up_t0: truth.t0,
        m_u,
        grashof: sys.grashof(),
        constants,
        turnover_time,
        horizon_turnovers: turnover_time.map(|te| cfg.time.horizon / te),
        limsup,
        tail_std_error,
        bound_kind: report.as_ref().map(|r| r.kind),
        bound,
        bound_satisfied: match (limsup, bound) {
            (Some(l), Some(b)) => Some(l.limsup <= b),
            _ => None,
        },
        guaranteed,
        enstrophy_average: enstrophy_avg,
        enstrophy_bound: enstrophy_bd,
        status,
    };
    Ok(RunResult { summary, report, series, replicas: replica_rows })
}

fn bound_report(
    cfg: &ExperimentConfig,
    kind: BoundKind,
    sys: &dyn DissipativeSystem,
    op: &ObservationOperator,
    filter: &Filter,
    cal: &Calibration,
    m_u: f64,
) -> Result<BoundReport> {
    let cov = match filter {
        Filter::ThreeDVar { cov, .. } => Some(cov),
        _ => None,
    };
    let inputs = ConditionInputs {
        nu: sys.viscosity(),
        lambda1: sys.lambda1(),
        grashof: sys.grashof(),
        sigma: cfg.observation.sigma,
        h: op.h(),
        beta: cfg.beta(),
        mu: cfg.mu(),
        q: op.rank(),
        c1: Some(cal.c1),
        c2: Some(cal.c2),
        c_l: Some(cal.c_l),
        m_u: Some(m_u),
        cross_norm: cov.map_or(0.0, |c| cross_block_norm(c, op)),
        trace_cihc: cov.map(|c| trace_c_ih_c(c, op)),
        projection: op.is_orthogonal_projection(),
    };
    let mut report = check_conditions(kind, &inputs)?;
    if cfg.filter.kind.is_ensemble() {
        // the ensemble bounds hold for C_μ = ¼PĈP + μP only
        report.flags.insert("c_mu_form".into(), cfg.filter.localize && cfg.filter.multiplicative == 1.0);
        report.guaranteed = report.flags.values().all(|b| *b);
    }
    Ok(report)
}

fn aggregate(outcomes: &[ReplicaOutcome], samples: &[TruthSample]) -> Vec<SeriesRow> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let recs: Vec<_> = outcomes.iter().filter_map(|o| o.records.get(i)).collect();
            let n = recs.len();
            let mean = |f: &dyn Fn(&crate::filters::FilterRecord) -> f64| if n == 0 { f64::NAN } else { recs.iter().map(|r| f(r)).sum::<f64>() / n as f64 };
            let err = mean(&|r| r.err_h2);
            let se = if n >= 2 { (recs.iter().map(|r| (r.err_h2 - err).powi(2)).sum::<f64>() / ((n - 1) * n) as f64).sqrt() } else { f64::NAN };
            SeriesRow {
                t: s.t,
                replicas: n,
                err_h2: err,
                err_h2_se: se,
                err_v2: mean(&|r| r.err_v2),
                mean_err_h2: mean(&|r| r.mean_err_h2),
                trace_cihc: mean(&|r| r.trace_cihc),
                damping: mean(&|r| r.damping),
                truth_h: s.norm_h,
                truth_v: s.norm_v,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config_hash: String,
    pub version: String,
    pub files: Vec<String>,
}

/// Write every artifact of a run into `dir`.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, result: &RunResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    let mut w = csv::Writer::from_path(dir.join("series.csv"))?;
    for row in &result.series {
        w.serialize(row)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("replicas.csv"))?;
    for row in &result.replicas {
        w.serialize(row)?;
    }
    w.flush()?;
    fs::write(dir.join("bound_report.json"), serde_json::to_string_pretty(&result.report)?)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&result.summary)?)?;
    let files = ["config.toml", "config.json", "series.csv", "replicas.csv", "bound_report.json", "summary.json"];
    let manifest = Manifest {
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        version: env!("CARGO_PKG_VERSION").into(),
        files: files.iter().map(|s| s.to_string()).collect(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Execute `cfg` and write its artifacts to `cfg.output`.
pub fn run_twin_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    let result = execute(cfg)?;
    write_run(&cfg.output, cfg, &result)?;
    Ok(result)
}

/// Constants and the bound report a run of `cfg` would use, estimated from
/// the spin-up alone.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Preflight {
    pub config_hash: String,
    pub constants: Calibration,
    pub spin_up_t0: f64,
    pub m_u: f64,
    pub report: Option<BoundReport>,
}

pub fn preflight(cfg: &ExperimentConfig) -> Result<Preflight> {
    cfg.validate()?;
    let model = Model::build(&cfg.system)?;
    let op = model.operator(&cfg.observation.operator)?;
    let constants = model.constants(&op, cfg.calibration.corpus, cfg.calibration.seed)?;
    let filter = build_filter(cfg, &op)?;
    let truth = spin_up_truth(cfg, &model)?;
    // the trailing fifth of the spin-up stands in for the filtered trajectory
    let from = 0.8 * truth.final_time;
    let m_u = truth.times.iter().zip(&truth.norm_v).filter(|(t, _)| **t >= from).map(|(_, v)| *v).fold(0.0, f64::max);
    let report = match cfg.filter.bound.or(default_bound_kind(cfg.filter.kind, &op)) {
        Some(kind) => Some(bound_report(cfg, kind, model.sys(), &op, &filter, &constants, m_u)?),
        None => None,
    };
    Ok(Preflight { config_hash: cfg.hash(), constants, spin_up_t0: truth.t0, m_u, report })
}
