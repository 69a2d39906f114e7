use std::path::{Path, PathBuf};

use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Clap(#[from] clap::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Data {
        path: PathBuf,
        source: arcmatch::Error,
    },

    #[error(transparent)]
    Core(#[from] arcmatch::Error),

    #[error("gradient check failed for {failed} of {total} runs")]
    GradcheckFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use arcmatch::Error as E;
        match self {
            CliError::Usage(_) | CliError::Clap(_) => EXIT_USAGE,
            CliError::GradcheckFailed { .. } => EXIT_NUMERIC,
            CliError::Io { .. } => EXIT_DATA,
            CliError::Data { source, .. } | CliError::Core(source) => match source {
                E::Config(_) => EXIT_USAGE,
                E::Numeric(_) => EXIT_NUMERIC,
                _ => EXIT_DATA,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn data_err(path: &Path) -> impl FnOnce(arcmatch::Error) -> CliError + '_ {
    move |source| match source {
        arcmatch::Error::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        source => CliError::Data {
            path: path.to_path_buf(),
            source,
        },
    }
}
