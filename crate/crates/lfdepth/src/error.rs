use std::io;
use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("view ({row}, {col}): {msg}")]
    View { row: usize, col: usize, msg: String },

    #[error("image {path}: {msg}")]
    Image { path: PathBuf, msg: String },

    #[error("pfm: {0}")]
    Pfm(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("scene: {0}")]
    Scene(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("metric: {0}")]
    Metric(String),
}

pub type Result<T> = std::result::Result<T, Error>;
