//! Experiment runner, configuration schema and acceptance suite.

pub mod checks;
pub mod config;
pub mod error;
pub mod experiments;
pub mod suite;
pub mod table;

pub use config::ExperimentConfig;
pub use error::CliError;
