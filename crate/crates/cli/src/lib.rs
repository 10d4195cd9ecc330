//! Experiment runner: JSON configs, pipelines over the core library, reports.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod suite;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use report::RunReport;
