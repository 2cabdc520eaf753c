//! Experiment harness: config parsing, pipeline stages and run reports.

pub mod config;
pub mod error;
pub mod stages;

pub use config::ExperimentConfig;
pub use error::{BenchError, Result};
pub use stages::{Layout, RunReport, Variant};
