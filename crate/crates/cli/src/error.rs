use std::path::PathBuf;

use cvconv_core::Error as CoreError;

/// Exit code for a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit code when a check or threshold fails.
pub const EXIT_VERIFICATION: i32 = 1;
/// Exit code for malformed input or configuration.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::Input { .. } => EXIT_USAGE,
            CliError::Core(e) => match e {
                CoreError::Support { .. }
                | CoreError::Factorization { .. }
                | CoreError::LeftoverExcitation { .. }
                | CoreError::SpectrumTrace(_) => EXIT_VERIFICATION,
                _ => EXIT_USAGE,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
