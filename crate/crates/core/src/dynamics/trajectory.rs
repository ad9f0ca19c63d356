use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{DissipativeSystem, Stepper};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinUpConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Record norms every this many steps.
    #[serde(default = "one")]
    pub sample_every: usize,
    /// Multiplicative slack on the absorbing-ball radii.
    #[serde(default = "default_slack")]
    pub slack: f64,
    /// Trailing fraction of the horizon that must lie inside the ball.
    #[serde(default = "default_window")]
    pub window_fraction: f64,
    /// Keep full states every this many steps (none if absent).
    #[serde(default)]
    pub snapshot_every: Option<usize>,
}

fn one() -> usize {
    1
}
fn default_slack() -> f64 {
    1.1
}
fn default_window() -> f64 {
    0.2
}

impl SpinUpConfig {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self { dt, horizon, sample_every: 1, slack: 1.1, window_fraction: 0.2, snapshot_every: None }
    }
}

/// Sampled truth run with its spin-up diagnostics.
#[derive(Clone, Debug)]
pub struct TruthTrajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub norm_h: Vec<f64>,
    pub norm_v: Vec<f64>,
    /// ‖Au‖_H (NaN where the system does not define it).
    pub norm_au: Vec<f64>,
    pub snapshots: Vec<(f64, DVector<f64>)>,
    /// Time after which every sample satisfies the absorbing-ball bounds.
    pub t0: f64,
    pub grashof: Option<f64>,
    /// sup ‖u‖_V over samples with t ≥ t₀.
    pub m_u: f64,
    pub final_time: f64,
    pub final_state: DVector<f64>,
}

impl TruthTrajectory {
    /// Mean of ‖u‖_H over samples with t ≥ t₀.
    pub fn mean_norm_h(&self) -> f64 {
        let xs: Vec<f64> = self.times.iter().zip(&self.norm_h).filter(|(t, _)| **t >= self.t0).map(|(_, x)| *x).collect();
        xs.iter().sum::<f64>() / xs.len().max(1) as f64
    }
}

/// Integrate from `u0` and locate the entrance time into the absorbing ball.
pub fn spin_up<S: DissipativeSystem + ?Sized>(sys: &S, u0: &DVector<f64>, cfg: &SpinUpConfig) -> Result<TruthTrajectory> {
    if !(cfg.horizon > 0.0) || cfg.sample_every == 0 {
        return Err(Error::InvalidParameter("spin-up horizon and sampling must be positive".into()));
    }
    let stepper = Stepper::new(sys, cfg.dt)?;
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let mut u = u0.clone();
    let mut traj = TruthTrajectory {
        dt: cfg.dt,
        times: Vec::new(),
        norm_h: Vec::new(),
        norm_v: Vec::new(),
        norm_au: Vec::new(),
        snapshots: Vec::new(),
        t0: 0.0,
        grashof: sys.grashof(),
        m_u: 0.0,
        final_time: 0.0,
        final_state: u0.clone(),
    };
    let record = |traj: &mut TruthTrajectory, t: f64, u: &DVector<f64>| {
        traj.times.push(t);
        traj.norm_h.push(u.norm());
        traj.norm_v.push(sys.norm_v(u));
        traj.norm_au.push(sys.norm_au(u).unwrap_or(f64::NAN));
    };
    record(&mut traj, 0.0, &u);
    if cfg.snapshot_every.is_some() {
        traj.snapshots.push((0.0, u.clone()));
    }
    for s in 0..steps {
        let t = s as f64 * cfg.dt;
        u = stepper.step(sys, t, &u, None)?;
        let t1 = (s + 1) as f64 * cfg.dt;
        if (s + 1) % cfg.sample_every == 0 {
            record(&mut traj, t1, &u);
        }
        if let Some(k) = cfg.snapshot_every {
            if (s + 1) % k == 0 {
                traj.snapshots.push((t1, u.clone()));
            }
        }
    }
    traj.final_time = steps as f64 * cfg.dt;
    traj.final_state = u;

    let window_start = (1.0 - cfg.window_fraction) * traj.final_time;
    let ok: Vec<bool> = match (sys.absorbing_bounds(), sys.grashof()) {
        (Some(_), Some(g)) if g == 0.0 => {
            // unforced: the ball shrinks to the origin; require monotone decay
            let mut v = vec![true];
            v.extend(traj.norm_h.windows(2).map(|w| w[1] <= w[0] * (1.0 + 1e-12)));
            v
        }
        (Some((bh, bv)), _) => traj
            .norm_h
            .iter()
            .zip(&traj.norm_v)
            .map(|(h, v)| h * h <= cfg.slack * bh && v * v <= cfg.slack * bv)
            .collect(),
        (None, _) => traj.times.iter().map(|t| *t >= window_start).collect(),
    };
    let first_good = ok.iter().rposition(|b| !b).map(|i| i + 1).unwrap_or(0);
    if first_good >= ok.len() || traj.times[first_good] > window_start + 1e-12 * traj.final_time.max(1.0) {
        let (bh, bv) = sys.absorbing_bounds().unwrap_or((f64::NAN, f64::NAN));
        return Err(Error::SpinUpFailed(format!(
            "absorbing-ball bounds not met over the last {:.0}% of the horizon (H² bound {:.4e}, V² bound {:.4e}, final |u|_H² {:.4e}, |u|_V² {:.4e})",
            100.0 * cfg.window_fraction,
            cfg.slack * bh,
            cfg.slack * bv,
            traj.norm_h.last().unwrap().powi(2),
            traj.norm_v.last().unwrap().powi(2),
        )));
    }
    traj.t0 = traj.times[first_good];
    traj.m_u = traj.norm_v[first_good..].iter().cloned().fold(0.0, f64::max);
    Ok(traj)
}

/// JSON manifest accompanying chunked binary snapshots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub system: String,
    pub dim: usize,
    pub dt: f64,
    pub nu: f64,
    pub forcing: serde_json::Value,
    pub seed: u64,
    pub grashof: Option<f64>,
    pub t0: f64,
    pub m_u: f64,
    pub chunk_len: usize,
    pub snapshots: usize,
    pub chunks: Vec<String>,
}

/// Each chunk file holds up to `chunk_len` records of `(t, u_1..u_dim)` as
/// little-endian f64.
pub fn write_trajectory(dir: &Path, snapshots: &[(f64, DVector<f64>)], mut manifest: TrajectoryManifest) -> Result<TrajectoryManifest> {
    fs::create_dir_all(dir)?;
    let chunk_len = manifest.chunk_len.max(1);
    manifest.chunks.clear();
    manifest.snapshots = snapshots.len();
    for (c, chunk) in snapshots.chunks(chunk_len).enumerate() {
        let name = format!("states_{c:05}.bin");
        let mut w = BufWriter::new(fs::File::create(dir.join(&name))?);
        for (t, u) in chunk {
            if u.len() != manifest.dim {
                return Err(Error::Shape(format!("snapshot of length {} in trajectory of dim {}", u.len(), manifest.dim)));
            }
            w.write_all(&t.to_le_bytes())?;
            for x in u.iter() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()?;
        manifest.chunks.push(name);
    }
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_trajectory(dir: &Path) -> Result<(TrajectoryManifest, Vec<(f64, DVector<f64>)>)> {
    let manifest: TrajectoryManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let mut out = Vec::with_capacity(manifest.snapshots);
    let rec = 8 * (manifest.dim + 1);
    for name in &manifest.chunks {
        let mut bytes = Vec::new();
        BufReader::new(fs::File::open(dir.join(name))?).read_to_end(&mut bytes)?;
        if bytes.len() % rec != 0 {
            return Err(Error::Serde(format!("chunk {name} is truncated")));
        }
        for r in bytes.chunks_exact(rec) {
            let f = |i: usize| f64::from_le_bytes(r[8 * i..8 * i + 8].try_into().unwrap());
            out.push((f(0), DVector::from_fn(manifest.dim, |i, _| f(i + 1))));
        }
    }
    if out.len() != manifest.snapshots {
        return Err(Error::Serde(format!("expected {} snapshots, found {}", manifest.snapshots, out.len())));
    }
    Ok((manifest, out))
}
