//! Config-driven experiment runner around the training library: repeated
//! training runs, model files, evaluation, diversity and significance reports.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod results;

pub use config::{DataConfig, ExperimentConfig};
pub use error::{exit, CliError, CliResult};
pub use results::ResultsFile;
