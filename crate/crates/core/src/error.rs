use thiserror::Error;

/// Errors produced by the coordinate engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate simplex {0:?}")]
    DegenerateSimplex(Vec<usize>),

    #[error("rejection sampling exhausted after {attempts} attempts ({found} of {wanted} points)")]
    SamplingExhausted { attempts: usize, found: usize, wanted: usize },

    #[error("no retained simplex covers interior sample {location:?}")]
    UncoverableRegion { location: Vec<f64> },

    #[error("point {location:?} is not covered by any simplex")]
    NotCovered { location: Vec<f64> },

    #[error("query points {indices:?} are not covered by any simplex")]
    NotCoveredAt { indices: Vec<usize> },

    #[error("no usable sample in batch")]
    EmptyBatch,

    #[error("point lies on the cage boundary")]
    BoundaryPoint,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid cage: {0}")]
    InvalidCage(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("optimization diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
