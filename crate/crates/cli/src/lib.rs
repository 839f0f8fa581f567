//! Experiment runner: configuration, figure-data curves and file output.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::{ConfigLayer, ExperimentConfig, ExperimentKind};
pub use error::CliError;
pub use experiments::{run, Curve, Row, RunOutcome};
