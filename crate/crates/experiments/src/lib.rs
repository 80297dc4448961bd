//! Batch experiments for the preference-based kernel RL learner: TOML
//! config, seeded runs, CSV traces, summary, manifest and SVG regret plots.

pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;
pub mod runner;

pub use config::{load_config, ExperimentConfig, Overrides};
pub use error::{ConfigError, RunError};
pub use runner::{run_experiment, ExperimentOutput};
