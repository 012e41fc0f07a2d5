//! File formats, HTTP access and command implementations behind the
//! `llmexpert` binary.

pub mod bundle;
pub mod cli;
pub mod elicit;
pub mod evaluate;
pub mod fsutil;
pub mod gateway;
pub mod impute;
pub mod manifest;
pub mod svg;
pub mod weather;

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable inputs or an offline run that cannot be served.
    #[error("{0}")]
    Config(String),
    /// The command stopped part way; what was done is on disk.
    #[error("{0}")]
    Partial(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Partial(_) | CliError::Io { .. } => 3,
        }
    }

    pub fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }
}

pub(crate) fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}
