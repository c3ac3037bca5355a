use std::path::PathBuf;

/// Command failures, mapped onto process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),

    #[error("cannot read `{}`: {reason}", path.display())]
    MissingFile { path: PathBuf, reason: String },

    #[error("{0}")]
    Runtime(String),
}

impl AppError {
    /// `1` for usage and input-file problems, `2` for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) | AppError::MissingFile { .. } => 1,
            AppError::Runtime(_) => 2,
        }
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        AppError::Runtime(e.to_string())
    }
}

impl From<ratiosparse_core::Error> for AppError {
    fn from(e: ratiosparse_core::Error) -> Self {
        AppError::Runtime(e.to_string())
    }
}

pub type AppResult<T> = Result<T, AppError>;
