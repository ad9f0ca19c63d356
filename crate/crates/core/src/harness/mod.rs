//! Experiment configuration, twin-experiment orchestration, sweeps,
//! reports and the identity suite behind the `da` command.

mod config;
mod experiment;
mod identities;
mod sweep;

pub use config::{CalibrationConfig, ExperimentConfig, FilterConfig, ObservationConfig, SeedConfig, SystemConfig, TimeConfig};
pub use experiment::{
    build_filter, default_bound_kind, execute, preflight, run_twin_experiment, spin_up_truth, write_run, Manifest, Model, Preflight, ReplicaFailure, ReplicaRow, RunResult,
    RunStatus, RunSummary, SeriesRow,
};
pub use identities::{verify_identities, IdentityCheck, IdentityReport};
pub use sweep::{report, sweep, ReportRow, SweepCell};

/// Process exit codes of the `da` command.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONDITIONS_FALSE: i32 = 2;
    pub const IDENTITY_FAILURE: i32 = 3;
    pub const RUN_ERROR: i32 = 4;
}
