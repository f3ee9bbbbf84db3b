use thiserror::Error;

/// Errors produced by the radar processing and detection stages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("scatterer at range {range:.3} m is beyond the unambiguous range {r_max:.3} m")]
    BeyondMaxRange { range: f64, r_max: f64 },
    #[error("array geometry has no overlapped virtual elements")]
    UnsupportedGeometry,
    #[error("cell is ambiguous: best fold coherence {coherence:.3} below threshold")]
    AmbiguousCell { coherence: f64 },
    #[error("point set is empty")]
    EmptySet,
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: usize, loss: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
