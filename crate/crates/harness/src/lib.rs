//! Configuration-driven experiment runner: JSON configs in, JSON reports,
//! CSV tables, SVG plots and a run manifest out.

pub mod config;
pub mod plot;
pub mod report;
pub mod run;

pub use config::{ConfigError, Experiment, ExperimentConfig};
pub use report::{Check, Report, RunManifest};
pub use run::{execute, run, run_payload, RunError, RunOutcome, RunPayload};
