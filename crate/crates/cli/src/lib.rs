//! Configuration, orchestration and export for the microgrid benchmark.

pub mod config;
pub mod error;
pub mod experiment;
pub mod export;

pub use config::ExperimentConfig;
pub use error::CliError;
