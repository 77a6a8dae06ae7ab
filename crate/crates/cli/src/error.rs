use std::path::PathBuf;

use idswap_core::Error;

/// Failure categories mapped to process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("plot error: {0}")]
    Plot(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } | CliError::Plot(_) => "io",
            CliError::Core(e) => match e {
                Error::Io { .. }
                | Error::Image(_)
                | Error::Json(_)
                | Error::Csv(_)
                | Error::Format { .. }
                | Error::DuplicateId { .. }
                | Error::Inconsistent(_)
                | Error::Empty(_) => "io",
                Error::Backend(_) | Error::Unsupported(_) => "backend",
                _ => "runtime",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "io" => 3,
            "backend" => 4,
            _ => 5,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
