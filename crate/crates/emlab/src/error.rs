//! Error type shared across the laboratory.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    /// Grid parameters that cannot describe a dyadic tableau or scheme level.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// A named drift that is not in the registry.
    #[error("unknown drift `{0}`")]
    UnknownDrift(String),

    /// A named test functional that is not in the registry.
    #[error("unknown functional `{0}`")]
    UnknownFunctional(String),

    /// Drift/experiment combination the theory does not cover.
    #[error("inadmissible experiment: {0}")]
    Inadmissible(String),

    /// Configuration validation; collects every violation at once.
    #[error("invalid config:\n{}", .0.join("\n"))]
    InvalidConfig(Vec<String>),

    /// A runtime numerical assertion failed (bound violation, non-contraction, ...).
    #[error("numerical assertion failed: {0}")]
    Numerical(String),

    /// Result file does not match the running binary.
    #[error("version mismatch: {0}")]
    VersionMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
