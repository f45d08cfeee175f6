use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("non-finite activation in layer {layer} at step {step}")]
    NonFinite { layer: String, step: usize },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{path}: bad magic, expected {expected:?}, found {found:?}")]
    BadMagic {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{path}: truncated payload, expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: unsupported dtype byte {dtype} (allowed: 0 = f32, 1 = f64)")]
    BadDtype { path: PathBuf, dtype: u8 },

    #[error("{path}: dimensions {rows}x{cols} overflow the addressable size")]
    DimensionOverflow { path: PathBuf, rows: u64, cols: u64 },

    #[error("{path}: mask byte {value} at offset {offset} is not 0 or 1")]
    BadMaskByte {
        path: PathBuf,
        offset: usize,
        value: u8,
    },

    #[error("catalog: duplicate session (subject {subject:?}, session {session:?})")]
    DuplicateSession { subject: String, session: String },

    #[error("catalog: unknown role {role:?}, allowed roles are {allowed:?}")]
    UnknownRole {
        role: String,
        allowed: &'static [&'static str],
    },

    #[error("catalog: {0}")]
    Catalog(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by user input (bad files, bad config) rather
    /// than internal failures.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::NonFinite { .. } | Error::Diverged { .. })
    }
}
