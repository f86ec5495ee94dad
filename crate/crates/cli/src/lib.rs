//! Command-line front end for `kslab`: config parsing, subcommands, sweeps
//! and all file emission.

use std::io;

pub mod classify;
pub mod config;
pub mod constants;
pub mod manifest;
pub mod semigroup;
pub mod simulate;
pub mod sweep;

/// Stable process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// Numerical failure during a run, or failed runs inside a sweep.
    pub const FAILURE: u8 = 1;
    /// Invalid configuration, parameters or input files.
    pub const INVALID: u8 = 2;
    pub const SUPERCRITICAL_NORM: u8 = 3;
    pub const INDETERMINATE: u8 = 4;
    pub const BLOWUP_FLAG: u8 = 5;
    pub const ESTIMATE_FAILED: u8 = 6;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Model(#[from] kslab::Error),

    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Model(kslab::Error::Negativity { .. }) => exit::FAILURE,
            CliError::Model(kslab::Error::NumericalBlowup { .. }) => exit::BLOWUP_FLAG,
            CliError::Json(_) => exit::FAILURE,
            _ => exit::INVALID,
        }
    }
}
