//! Experiment runner: data preparation, hyperparameter search, repeated
//! training runs and statistical reporting.

pub mod commands;
pub mod config;
pub mod error;
pub mod methods;
pub mod report;

pub use commands::{
    cmd_prepare, cmd_run, cmd_search, read_results, run_seed, RunRecord, SearchOutcome,
};
pub use config::{ExperimentConfig, Method};
pub use error::{CliError, CliResult};
pub use report::cmd_report;
