use std::path::{Path, PathBuf};

use thiserror::Error;

/// Errors of the on-disk formats and configuration handling.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad magic {found:?}, expected {expected:?}")]
    Magic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {found} (reader supports {supported})")]
    Version { found: u16, supported: u16 },
    #[error("unknown dtype code {0}")]
    Dtype(u8),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("manifest: {0}")]
    Pairing(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] radelft_core::Error),
}

impl FormatError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

pub type Result<T> = std::result::Result<T, FormatError>;
