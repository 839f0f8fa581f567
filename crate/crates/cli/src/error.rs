use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config file {path}: {source}")]
    ReadConfig {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot parse config file: {0}")]
    ParseConfig(#[from] toml::de::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    #[error("numerical failure in curve {curve}: {source}")]
    Numerical {
        curve: String,
        source: dasrate::Error,
    },

    #[error("cannot write output {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot serialize output: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ReadConfig { .. }
            | CliError::ParseConfig(_)
            | CliError::Config(_)
            | CliError::Infeasible(_) => 2,
            CliError::Numerical { .. } => 3,
            CliError::Write { .. } | CliError::Serialize(_) => 1,
        }
    }
}
