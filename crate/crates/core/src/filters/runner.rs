//! Lockstep twin-experiment runner: one truth, many filter replicas.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{inflation_damping, DivergenceGuard, Filter};
use crate::covariance::trace_c_ih_c;
use crate::dynamics::{DissipativeSystem, Stepper};
use crate::error::Result;
use crate::observations::ObservationOperator;
use crate::rng::{NoisePath, StreamRole};

/// Noise lineage of one replica: the seed plus a replica index, mapped to
/// disjoint member ranges of the counter-based streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Streams {
    /// Seed of the observation-noise stream.
    pub seed: u64,
    /// Seed of the per-member perturbation stream.
    pub filter_seed: u64,
    pub replica: u64,
}

impl Streams {
    const STRIDE: u64 = 1 << 24;

    pub fn new(seed: u64, replica: u64) -> Self {
        Self { seed, filter_seed: seed, replica }
    }

    pub fn with_filter_seed(mut self, filter_seed: u64) -> Self {
        self.filter_seed = filter_seed;
        self
    }

    /// Observation-noise increment shared by all members.
    pub fn shared(&self, q: usize, dt: f64, step: u64) -> DVector<f64> {
        NoisePath::new(self.seed, StreamRole::ObservationNoise, q, dt).increment(self.replica * Self::STRIDE, step)
    }

    /// Per-member perturbation increment.
    pub fn member(&self, q: usize, dt: f64, k: usize, step: u64) -> DVector<f64> {
        NoisePath::new(self.filter_seed, StreamRole::FilterNoise, q, dt).increment(self.replica * Self::STRIDE + k as u64, step)
    }
}

/// Everything shared by the replicas of one experiment.
pub struct TwinSetup<'a, S: DissipativeSystem + ?Sized> {
    pub sys: &'a S,
    pub op: &'a ObservationOperator,
    pub filter: &'a Filter,
    pub dt: f64,
    pub steps: usize,
    pub record_every: usize,
    pub t0: f64,
    pub truth0: DVector<f64>,
    pub guard: DivergenceGuard,
}

/// One replica: its noise lineage and initial members.
#[derive(Clone, Debug)]
pub struct ReplicaRun {
    pub streams: Streams,
    pub init: Vec<DVector<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub t: f64,
    /// (1/K) Σ ‖e_k‖²_H.
    pub err_h2: f64,
    /// (1/K) Σ ‖e_k‖²_V.
    pub err_v2: f64,
    /// ‖ē‖²_H for the ensemble-mean error.
    pub mean_err_h2: f64,
    /// Tr(C I_h C) for the effective covariance at this step.
    pub trace_cihc: f64,
    /// Inflation damping term (0 without additive inflation).
    pub damping: f64,
    pub truth_h: f64,
}

/// Truth norms at a record time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub t: f64,
    pub norm_h: f64,
    pub norm_v: f64,
}

#[derive(Clone, Debug)]
pub struct ReplicaOutcome {
    pub streams: Streams,
    pub records: Vec<FilterRecord>,
    pub members: Vec<DVector<f64>>,
    /// Set when the replica stopped early (divergence or another error).
    pub failure: Option<String>,
    pub diverged: bool,
}

struct Live {
    run: ReplicaRun,
    members: Vec<DVector<f64>>,
    records: Vec<FilterRecord>,
    failure: Option<(String, bool)>,
}

fn record<S: DissipativeSystem + ?Sized>(setup: &TwinSetup<S>, t: f64, u: &DVector<f64>, members: &[DVector<f64>]) -> Result<FilterRecord> {
    let k = members.len() as f64;
    let errors: Vec<DVector<f64>> = members.iter().map(|m| m - u).collect();
    let err_h2 = errors.iter().map(|e| e.norm_squared()).sum::<f64>() / k;
    let err_v2 = errors.iter().map(|e| setup.sys.norm_v(e).powi(2)).sum::<f64>() / k;
    let mean = errors.iter().fold(DVector::zeros(u.len()), |a, e| a + e) / k;
    let trace_cihc = match setup.filter {
        Filter::Nudging { .. } => 0.0,
        f => trace_c_ih_c(&f.covariance(setup.op, members)?, setup.op),
    };
    let damping = match setup.filter.inflation() {
        Some(inf) if inf.additive > 0.0 => inflation_damping(setup.op, &errors, inf.additive, setup.filter.sigma()),
        _ => 0.0,
    };
    Ok(FilterRecord { t, err_h2, err_v2, mean_err_h2: mean.norm_squared(), trace_cihc, damping, truth_h: u.norm() })
}

/// Advance the truth once per step and every replica in lockstep. A replica
/// that diverges or fails stops with its partial records; the others go on.
pub fn run_replicas<S: DissipativeSystem + ?Sized>(setup: &TwinSetup<S>, runs: Vec<ReplicaRun>) -> Result<(Vec<ReplicaOutcome>, Vec<TruthSample>)> {
    let stepper = Stepper::new(setup.sys, setup.dt)?;
    let q = setup.op.rank();
    let every = setup.record_every.max(1);
    let mut live: Vec<Live> = runs.into_iter().map(|run| Live { members: run.init.clone(), run, records: Vec::new(), failure: None }).collect();
    let mut u = setup.truth0.clone();
    let mut truth = Vec::new();
    for j in 0..=setup.steps {
        let t = setup.t0 + j as f64 * setup.dt;
        let observed = setup.op.observe(&u)?;
        if j % every == 0 {
            truth.push(TruthSample { t, norm_h: u.norm(), norm_v: setup.sys.norm_v(&u) });
        }
        live.par_iter_mut().filter(|l| l.failure.is_none()).for_each(|l| {
            if j % every == 0 {
                match record(setup, t, &u, &l.members) {
                    Ok(r) => l.records.push(r),
                    Err(e) => {
                        l.failure = Some((e.to_string(), false));
                        return;
                    }
                }
            }
            if j == setup.steps {
                return;
            }
            let step = j as u64;
            let shared = l.run.streams.shared(q, setup.dt, step);
            let perturb: Vec<DVector<f64>> = match setup.filter {
                Filter::Enkf { .. } => (0..l.members.len()).map(|k| l.run.streams.member(q, setup.dt, k, step)).collect(),
                _ => Vec::new(),
            };
            let next = setup
                .filter
                .step(setup.sys, &stepper, setup.op, t, &l.members, &observed, &shared, &perturb)
                .and_then(|m| setup.guard.check(j + 1, &m).map(|_| m));
            match next {
                Ok(m) => l.members = m,
                Err(e) => {
                    let diverged = matches!(e, crate::Error::FilterDivergence { .. });
                    l.failure = Some((e.to_string(), diverged));
                }
            }
        });
        if j < setup.steps {
            u = stepper.step(setup.sys, t, &u, None)?;
        }
    }
    let outcomes = live
        .into_iter()
        .map(|l| ReplicaOutcome {
            streams: l.run.streams,
            records: l.records,
            members: l.members,
            diverged: l.failure.as_ref().is_some_and(|f| f.1),
            failure: l.failure.map(|f| f.0),
        })
        .collect();
    Ok((outcomes, truth))
}

/// Two filter runs sharing one noise lineage, started from different states.
#[derive(Clone, Debug)]
pub struct PairRun {
    pub streams: Streams,
    pub first: Vec<DVector<f64>>,
    pub second: Vec<DVector<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairOutcome {
    pub streams: Streams,
    pub times: Vec<f64>,
    /// ‖m̄¹ − m̄²‖²_H at the record times.
    pub distance2: Vec<f64>,
    pub failure: Option<String>,
}

fn mean_of(members: &[DVector<f64>]) -> DVector<f64> {
    members.iter().fold(DVector::zeros(members[0].len()), |a, m| a + m) / members.len() as f64
}

/// Lockstep paired runs for stability studies.
pub fn run_pairs<S: DissipativeSystem + ?Sized>(setup: &TwinSetup<S>, pairs: Vec<PairRun>) -> Result<Vec<PairOutcome>> {
    let stepper = Stepper::new(setup.sys, setup.dt)?;
    let q = setup.op.rank();
    let every = setup.record_every.max(1);
    struct State {
        run: PairRun,
        a: Vec<DVector<f64>>,
        b: Vec<DVector<f64>>,
        out: PairOutcome,
    }
    let mut states: Vec<State> = pairs
        .into_iter()
        .map(|run| State {
            a: run.first.clone(),
            b: run.second.clone(),
            out: PairOutcome { streams: run.streams, times: Vec::new(), distance2: Vec::new(), failure: None },
            run,
        })
        .collect();
    let mut u = setup.truth0.clone();
    for j in 0..=setup.steps {
        let t = setup.t0 + j as f64 * setup.dt;
        let observed = setup.op.observe(&u)?;
        states.par_iter_mut().filter(|s| s.out.failure.is_none()).for_each(|s| {
            if j % every == 0 {
                s.out.times.push(t);
                s.out.distance2.push((mean_of(&s.a) - mean_of(&s.b)).norm_squared());
            }
            if j == setup.steps {
                return;
            }
            let step = j as u64;
            let shared = s.run.streams.shared(q, setup.dt, step);
            let perturb: Vec<DVector<f64>> = match setup.filter {
                Filter::Enkf { .. } => (0..s.a.len()).map(|k| s.run.streams.member(q, setup.dt, k, step)).collect(),
                _ => Vec::new(),
            };
            let next = |m: &[DVector<f64>]| {
                setup
                    .filter
                    .step(setup.sys, &stepper, setup.op, t, m, &observed, &shared, &perturb)
                    .and_then(|m| setup.guard.check(j + 1, &m).map(|_| m))
            };
            match (next(&s.a), next(&s.b)) {
                (Ok(a), Ok(b)) => {
                    s.a = a;
                    s.b = b;
                }
                (Err(e), _) | (_, Err(e)) => s.out.failure = Some(e.to_string()),
            }
        });
        if j < setup.steps {
            u = stepper.step(setup.sys, t, &u, None)?;
        }
    }
    Ok(states.into_iter().map(|s| s.out).collect())
}
