use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("design matrix is rank deficient (pivot ratio {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("plant inversion did not converge (residual {residual:e} deg)")]
    NoConvergence { residual: f64 },

    #[error("bad grid spec: {0}")]
    BadGridSpec(String),

    #[error("dataset too sparse: {succeeded} of {total} grid points inverted")]
    DatasetTooSparse { succeeded: usize, total: usize },

    #[error("too few samples to split: {0}")]
    TooFewSamples(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("unknown hyperparameter `{key}` for family {family}")]
    UnknownHyperparameter { family: String, key: String },

    #[error("unknown model family `{0}`")]
    UnknownFamily(String),

    #[error("fit diverged: {0}")]
    FitDiverged(String),

    #[error("dataset carries no grid ordering metadata")]
    MissingOrderingMetadata,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
