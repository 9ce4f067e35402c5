use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate sample for agent {agent} at t={t}")]
    DuplicateSample { agent: String, t: f64 },
    #[error("input contains no samples")]
    Empty,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("track too short: {0}")]
    TrackTooShort(String),
    #[error("track is not on a uniform time grid")]
    NonUniformGrid,
    #[error("track has not been differentiated")]
    NotDifferentiated,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("column `{0}` contains non-finite values")]
    NonFinite(String),
    #[error("discs overlap: center distance {distance} <= combined radius {combined_radius}")]
    Overlap { distance: f64, combined_radius: f64 },
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("kernel matrix is not positive definite after jitter escalation to {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("mean of actual series is zero; NMAE undefined")]
    ZeroMean,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    MissingInput(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
