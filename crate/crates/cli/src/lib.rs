//! Batch front-end: experiment configs, the `run`, `converge`, `bench` and
//! `validate` commands, and their CSV/JSON outputs.

pub mod commands;
pub mod config;
pub mod output;

use lrei_core::Error as CoreError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const RESOURCE: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Resource(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Resource(_) | CliError::Io(_) => exit::RESOURCE,
            CliError::Core(e) => match e.root() {
                CoreError::SizeGuard { .. } | CoreError::DimensionOverflow { .. } => exit::RESOURCE,
                CoreError::NoConvergence { .. }
                | CoreError::NonFinite
                | CoreError::RankDeficient { .. }
                | CoreError::NotPositiveSemidefinite { .. } => exit::NUMERICAL,
                _ => exit::CONFIG,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(format!("i/o error: {e}"))
    }
}
