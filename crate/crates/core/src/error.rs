//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("enumeration ceiling exceeded: {0} sites (ceiling {1})")]
    EnumerationCeiling(usize, usize),

    #[error("dense eigensolve ceiling exceeded: {0} sites (ceiling {1})")]
    DenseCeiling(usize, usize),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("energy within {0:e} of the finite-volume spectrum; solve would be singular")]
    Resonant(f64),

    #[error("missing disorder value for site {0}")]
    MissingDisorder(String),

    #[error("unsupported density kind: {0}")]
    UnsupportedDensity(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checksum mismatch: {0}")]
    ChecksumMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: schema errors 2, resource ceilings 3,
    /// everything else is an assertion-level failure 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::EnumerationCeiling(..) | Error::DenseCeiling(..) => 3,
            _ => 1,
        }
    }
}
