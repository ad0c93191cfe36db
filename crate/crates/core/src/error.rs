//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Two boxes in different units were combined.
    #[error("unit mismatch: {0}")]
    UnitMismatch(&'static str),

    /// Grid or tensor dimensions do not agree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A coordinate or index fell outside its container.
    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    /// A value violated a documented invariant.
    #[error("invalid value: {0}")]
    InvalidValue(String),

    /// A required pyramid level is absent.
    #[error("missing pyramid level: stride {0}")]
    MissingLevel(u32),

    /// A sampling domain turned out to be empty.
    #[error("empty domain: {0}")]
    EmptyDomain(String),

    /// Manifest parsing or cross-referencing failed.
    #[error("manifest: {0}")]
    Manifest(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
