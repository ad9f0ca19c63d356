use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::config::ExperimentConfig;
use super::experiment::{run_twin_experiment, RunStatus, RunSummary};
use crate::error::{Error, Result};

/// One cell of a sweep.
#[derive(Clone, Debug)]
pub struct SweepCell {
    pub value: String,
    pub dir: PathBuf,
    pub outcome: std::result::Result<RunSummary, String>,
}

impl SweepCell {
    pub fn status(&self) -> RunStatus {
        self.outcome.as_ref().map_or(RunStatus::Failed, |s| s.status)
    }
}

/// Run `base` once per value of `param`, each into `out/<param>_<value>`.
pub fn sweep(base: &ExperimentConfig, param: &str, values: &[String], out: &Path) -> Result<Vec<SweepCell>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs: Vec<(String, ExperimentConfig)> = values
        .iter()
        .map(|v| {
            let mut c = base.with_param(param, v)?;
            c.output = out.join(format!("{}_{v}", param.replace('.', "_")));
            Ok((v.clone(), c))
        })
        .collect::<Result<_>>()?;
    let cells = configs
        .into_par_iter()
        .map(|(value, c)| SweepCell { value, dir: c.output.clone(), outcome: run_twin_experiment(&c).map(|r| r.summary).map_err(|e| e.to_string()) })
        .collect();
    report(out)?;
    Ok(cells)
}

/// One line of the aggregate table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub run: String,
    pub name: String,
    pub config_hash: String,
    pub system: String,
    pub filter: String,
    pub sigma: f64,
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    pub ensemble_size: usize,
    pub replicas: usize,
    pub completed: usize,
    pub diverged: usize,
    pub limsup: Option<f64>,
    pub tail_mean: Option<f64>,
    pub tail_std_error: Option<f64>,
    pub bound: Option<f64>,
    pub bound_satisfied: Option<bool>,
    pub guaranteed: Option<bool>,
    pub status: String,
}

impl ReportRow {
    fn from_summary(run: String, s: &RunSummary) -> Self {
        Self {
            run,
            name: s.name.clone(),
            config_hash: s.config_hash.clone(),
            system: s.system.clone(),
            filter: tag(&s.filter),
            sigma: s.sigma,
            beta: s.beta,
            mu: s.mu,
            ensemble_size: s.ensemble_size,
            replicas: s.replicas,
            completed: s.completed,
            diverged: s.diverged,
            limsup: s.limsup.map(|l| l.limsup),
            tail_mean: s.limsup.map(|l| l.tail_mean),
            tail_std_error: s.tail_std_error,
            bound: s.bound,
            bound_satisfied: s.bound_satisfied,
            guaranteed: s.guaranteed,
            status: tag(&s.status),
        }
    }
}

/// Serde name of a unit enum variant.
fn tag<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

/// Collect every `summary.json` below `dir` into `dir/report.csv`.
pub fn report(dir: &Path) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Io(e.into()))?;
        if entry.file_name() != "summary.json" {
            continue;
        }
        let text = fs::read_to_string(entry.path())?;
        let summary: RunSummary = serde_json::from_str(&text)?;
        let run = entry.path().parent().and_then(|p| p.strip_prefix(dir).ok()).map_or(String::new(), |p| p.display().to_string());
        rows.push(ReportRow::from_summary(if run.is_empty() { ".".into() } else { run }, &summary));
    }
    let mut w = csv::Writer::from_path(dir.join("report.csv"))?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(rows)
}
