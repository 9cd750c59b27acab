//! Config-driven experiment runner for `memassoc`.

pub mod config;
pub mod runner;

pub use config::{validate, ConfigErrors, ExperimentConfig, ExperimentKind};
pub use runner::{run, RunError, RunOutput};
