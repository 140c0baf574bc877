//! CSV ingestion, run configuration and report/plot-data emission around the
//! `gtdl` library: everything the command-line tool does apart from argument
//! parsing.

pub mod config;
pub mod curves;
pub mod loader;
pub mod report;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Load { path: String, message: String },

    #[error("row errors in {path}:\n{details}")]
    RowErrors { path: String, details: String },

    #[error("profile error: {0}")]
    Profile(String),

    #[error(transparent)]
    Model(#[from] gtdl::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, CliError>;
