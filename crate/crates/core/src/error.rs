use thiserror::Error;

pub type Result<T> = std::result::Result<T, QbldError>;

#[derive(Debug, Error)]
pub enum QbldError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("individual `{0}` has no observations")]
    EmptyIndividual(String),

    #[error("invariant violated at individual {individual}, period {period}: {message}")]
    InvariantViolation {
        individual: usize,
        period: usize,
        message: String,
    },

    #[error("degenerate chain: {0}")]
    DegenerateChain(String),

    #[error("chain of length {len} is too short for batch size {batch_size}")]
    InsufficientLength { len: usize, batch_size: usize },

    #[error("numerical floor: {0}")]
    NumericalFloor(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("random-effect draws are required but were not stored")]
    MissingAlpha,

    #[error("sweep {sweep}: {source}")]
    Sweep {
        sweep: usize,
        #[source]
        source: Box<QbldError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl QbldError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        QbldError::Domain(msg.into())
    }

    /// Drops the sweep wrapper, if any.
    pub fn root(&self) -> &QbldError {
        match self {
            QbldError::Sweep { source, .. } => source.root(),
            other => other,
        }
    }
}
