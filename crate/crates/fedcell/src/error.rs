use std::path::PathBuf;

use thiserror::Error;

/// Error taxonomy shared by every module. Variants map onto the process
/// exit codes used by the CLI: usage/config/partition -> 1, I/O and
/// malformed data -> 2, numeric divergence -> 3.
#[derive(Debug, Error)]
pub enum SimError {
    /// Structural misuse: mismatched dimensions, incompatible shapes.
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller violated an argument contract (bad range, empty input, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// The dataset cannot satisfy the requested client partition.
    #[error("partition error: {0}")]
    Partition(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A data file exists but its contents are malformed.
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// Training produced a non-finite gradient; the run is aborted.
    #[error("numeric divergence: {0}")]
    Numeric(String),
}

impl SimError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) | SimError::Usage(_) | SimError::Partition(_) => 1,
            SimError::Io { .. } | SimError::Format { .. } => 2,
            SimError::Numeric(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
