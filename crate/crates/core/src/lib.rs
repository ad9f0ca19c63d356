pub mod covariance;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod filters;
pub mod harness;
pub mod observations;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
