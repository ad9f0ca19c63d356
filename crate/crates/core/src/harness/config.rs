use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::BoundKind;
use crate::error::{Error, Result};
use crate::filters::FilterKind;
use crate::observations::ObservationSpec;

/// One twin experiment, as authored in TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub system: SystemConfig,
    pub observation: ObservationConfig,
    pub filter: FilterConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub seeds: SeedConfig,
    #[serde(default = "one")]
    pub replicas: usize,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    /// Output directory; not part of the config hash.
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_name() -> String {
    "experiment".into()
}
fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}
fn default_output() -> PathBuf {
    PathBuf::from("runs/experiment")
}
fn two_pi() -> f64 {
    2.0 * std::f64::consts::PI
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    NavierStokes {
        n: usize,
        #[serde(default = "two_pi")]
        length: f64,
        nu: f64,
        grashof: f64,
        /// Kolmogorov forcing wavenumber.
        #[serde(default = "shell")]
        shell: i64,
    },
    Lorenz63 {
        #[serde(default = "l63_alpha")]
        alpha: f64,
        #[serde(default = "unit")]
        beta: f64,
        #[serde(default = "l63_gamma")]
        gamma: f64,
        #[serde(default = "l63_rho")]
        rho: f64,
    },
    Lorenz96 {
        n: usize,
        forcing: f64,
    },
}

fn shell() -> i64 {
    1
}
fn l63_alpha() -> f64 {
    10.0
}
fn l63_gamma() -> f64 {
    8.0 / 3.0
}
fn l63_rho() -> f64 {
    28.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    pub operator: ObservationSpec,
    /// Observation noise level σ.
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub kind: FilterKind,
    /// Number of members K (1 for 3DVar and nudging).
    #[serde(default = "one")]
    pub ensemble_size: usize,
    /// 3DVar background strength β in C = β I_h.
    #[serde(default)]
    pub beta: Option<f64>,
    /// Gain relative to the noise: β/σ² for 3DVar, μ/σ² for the ensemble
    /// filters. Keeps the conditions fixed while σ is swept.
    #[serde(default)]
    pub gain: Option<f64>,
    /// Additive inflation (ensemble filters) or nudging gain.
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub localize: bool,
    #[serde(default = "unit")]
    pub multiplicative: f64,
    /// Initial members are truth plus perturbations of this size: the
    /// H-norm of a random smooth field for Navier–Stokes, the standard
    /// deviation per coordinate otherwise.
    #[serde(default = "unit")]
    pub init_spread: f64,
    /// Divergence guard as a multiple of the absorbing radius.
    #[serde(default)]
    pub guard_factor: Option<f64>,
    /// Which bound to report; chosen from the filter and operator if absent.
    #[serde(default)]
    pub bound: Option<BoundKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    /// Filtering horizon after spin-up.
    pub horizon: f64,
    /// Spin-up horizon of the truth.
    pub spin_up: f64,
    #[serde(default)]
    pub spin_up_dt: Option<f64>,
    #[serde(default = "one")]
    pub record_every: usize,
}

/// Seeds of the independent noise roles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub truth: u64,
    pub obs_noise: u64,
    pub filter_noise: u64,
    pub ensemble_init: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self::from_base(0)
    }
}

impl SeedConfig {
    /// All roles keyed by one seed; the roles keep the streams independent.
    pub fn from_base(seed: u64) -> Self {
        Self { truth: seed, obs_noise: seed, filter_noise: seed, ensemble_init: seed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default = "corpus")]
    pub corpus: usize,
    #[serde(default)]
    pub seed: u64,
}

fn corpus() -> usize {
    crate::diagnostics::MIN_CORPUS
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { corpus: corpus(), seed: 0 }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form, with the output directory blanked.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let t = &self.time;
        if !(t.dt > 0.0 && t.horizon > 0.0 && t.spin_up > 0.0) || t.record_every == 0 || t.spin_up_dt.is_some_and(|d| !(d > 0.0)) {
            return bad("time step, horizons and record interval must be positive".into());
        }
        if !(self.observation.sigma > 0.0) {
            return bad(format!("observation noise σ must be positive, got {}", self.observation.sigma));
        }
        if self.replicas == 0 {
            return bad("at least one replica is required".into());
        }
        let f = &self.filter;
        if f.kind.is_ensemble() && f.ensemble_size < 2 {
            return bad(format!("{:?} needs at least 2 members", f.kind));
        }
        if !f.kind.is_ensemble() && f.ensemble_size != 1 {
            return bad(format!("{:?} runs a single member", f.kind));
        }
        match f.kind {
            FilterKind::ThreeDVar if f.beta.is_some() == f.gain.is_some() => bad("3dvar needs exactly one of `beta` or `gain`".into()),
            FilterKind::Nudging if f.mu.is_none() => bad("nudging needs `mu`".into()),
            FilterKind::Enkf | FilterKind::Ensrkf if f.mu.is_some() && f.gain.is_some() => bad("give `mu` or `gain`, not both".into()),
            _ => Ok(()),
        }
    }

    /// β for 3DVar.
    pub fn beta(&self) -> Option<f64> {
        let s2 = self.observation.sigma.powi(2);
        match self.filter.kind {
            FilterKind::ThreeDVar => self.filter.beta.or(self.filter.gain.map(|g| g * s2)),
            _ => None,
        }
    }

    /// Additive inflation (ensembles) or nudging gain.
    pub fn mu(&self) -> Option<f64> {
        let s2 = self.observation.sigma.powi(2);
        match self.filter.kind {
            FilterKind::Enkf | FilterKind::Ensrkf => Some(self.filter.mu.or(self.filter.gain.map(|g| g * s2)).unwrap_or(0.0)),
            FilterKind::Nudging => self.filter.mu,
            FilterKind::ThreeDVar => None,
        }
    }

    /// Copy with one field replaced; `param` is a dotted path or a short
    /// alias (sigma, beta, gain, mu, nu, grashof, forcing, dt, horizon,
    /// replicas, ensemble_size).
    pub fn with_param(&self, param: &str, value: &str) -> Result<Self> {
        let path = match param {
            "sigma" => "observation.sigma".to_string(),
            "beta" | "gain" | "mu" | "ensemble_size" | "localize" | "init_spread" => format!("filter.{param}"),
            "nu" | "grashof" | "forcing" | "n" | "shell" => format!("system.{param}"),
            "dt" | "horizon" | "spin_up" | "record_every" => format!("time.{param}"),
            p => p.to_string(),
        };
        let mut doc = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let mut slot = &mut doc;
        let keys: Vec<&str> = path.split('.').collect();
        for (i, key) in keys.iter().enumerate() {
            let table = slot.as_table_mut().ok_or_else(|| Error::Config(format!("`{path}` does not name a config field")))?;
            if i + 1 == keys.len() {
                let old = table.get(*key);
                let new = parse_value(value, old);
                table.insert(key.to_string(), new);
                break;
            }
            slot = table.get_mut(*key).ok_or_else(|| Error::Config(format!("`{path}` does not name a config field")))?;
        }
        let text = toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("setting {param} = {value}: {e}")))
    }
}

fn parse_value(s: &str, old: Option<&toml::Value>) -> toml::Value {
    let float_slot = matches!(old, Some(toml::Value::Float(_)));
    if let Ok(i) = s.parse::<i64>() {
        if !float_slot {
            return toml::Value::Integer(i);
        }
    }
    if let Ok(x) = s.parse::<f64>() {
        return toml::Value::Float(x);
    }
    if let Ok(b) = s.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    toml::Value::String(s.to_string())
}
