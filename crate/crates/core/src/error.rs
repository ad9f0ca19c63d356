use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite numeric input: {0}")]
    NumericInput(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("step rejected at t = {t}: {reason}")]
    StepRejected { t: f64, reason: String },
    #[error("spin-up failed: {0}")]
    SpinUpFailed(String),
    #[error("invalid projection: {0}")]
    InvalidProjection(String),
    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),
    #[error("unsupported operator: {0}")]
    UnsupportedOperator(String),
    #[error("filter diverged at step {step}: |m|_H = {norm:.3e} exceeds guard {guard:.3e}")]
    FilterDivergence { step: usize, norm: f64, guard: f64 },
    #[error("linear algebra failure: {reason} (condition number {condition:.3e})")]
    LinearAlgebra { reason: String, condition: f64 },
    #[error("missing calibration: {0}")]
    MissingCalibration(String),
    #[error("series too short: {len} samples, need at least {min}")]
    SeriesTooShort { len: usize, min: usize },
    #[error("invalid comparison: {0}")]
    InvalidComparison(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub(crate) fn ensure_finite(what: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericInput(what.to_string()))
    }
}

pub(crate) fn ensure_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Shape(format!("{what}: got length {got}, expected {want}")))
    }
}
