//! Configuration, drivers and output of shuttle experiments.

pub mod config;
pub mod feasibility;
pub mod output;
pub mod run;

pub use config::{validate_config, ConfigErrors, ExperimentConfig, ExperimentKind};
pub use run::{run_experiment, RunError, RunSummary};
