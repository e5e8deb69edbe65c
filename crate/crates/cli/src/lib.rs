//! Config-driven experiment runner for the regdist laboratory.

pub mod artifacts;
pub mod config;
pub mod run;

pub use config::{ConfigError, ExperimentConfig};
pub use run::{run, Overrides, RunError, RunSummary, SUBCOMMANDS};
