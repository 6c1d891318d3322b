//! Batch front-end: reads a JSON experiment config, runs one of the
//! commands and writes `report.json` plus CSV artifacts.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::RunOptions;
pub use config::ExperimentConfig;
pub use error::CliError;
