use std::path::PathBuf;

use serde::Serialize;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] adaptnav_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Structured error line written to stderr by the binary.
#[derive(Debug, Serialize)]
pub struct ErrorRecord<'a> {
    pub kind: &'a str,
    pub exit_code: i32,
    pub message: String,
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        use adaptnav_core::Error as E;
        match self {
            AppError::Usage(_) => "usage",
            AppError::Config(_) => "config",
            AppError::Core(E::Gen(_)) => "gen",
            AppError::Core(
                E::Config(_)
                | E::InvalidEncoderConfig(_)
                | E::InvalidPolicy(_)
                | E::InvalidCacheConfig(_)
                | E::InvalidThreshold(_),
            ) => "config",
            AppError::Core(_) => "runtime",
            AppError::Io { .. } => "io",
            AppError::Format { .. } => "format",
        }
    }

    /// 2 for anything the caller can fix in its input, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "usage" | "config" | "gen" | "format" => 2,
            _ => 3,
        }
    }

    pub fn record(&self) -> ErrorRecord<'static> {
        ErrorRecord {
            kind: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        }
    }
}
