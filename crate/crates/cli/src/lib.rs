//! Command-line front end: CSV ingestion, configuration and the `simulate`,
//! `select` and `estimate` workflows.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod report;

use std::path::PathBuf;

pub use commands::{cmd_estimate, cmd_select, cmd_simulate, run};
pub use config::{Cli, Command, RunConfig};
pub use ingest::{ingest_sample_a, ingest_sample_b, DataError};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("numerical failure: {0}")]
    Numerical(#[source] drsel::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) | CliError::Output { .. } => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<drsel::Error> for CliError {
    fn from(e: drsel::Error) -> Self {
        match e {
            drsel::Error::DegenerateColumn(j) => {
                CliError::Data(DataError::DegenerateColumn { column: j })
            }
            drsel::Error::UnsupportedDesign(d) => CliError::Config(format!("unsupported design {d:?}")),
            other => CliError::Numerical(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Shortest text that parses back to the same `f64`, with an exponent for
/// very large or small magnitudes and no trailing `.0`.
pub fn format_f64(v: f64) -> String {
    let s = format!("{v:?}");
    match s.strip_suffix(".0") {
        Some(t) => t.to_string(),
        None => s,
    }
}
