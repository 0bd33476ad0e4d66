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

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row {row}, column {column}: cannot parse {value:?} as a finite number")]
    BadCell {
        /// 1-based data row (header excluded).
        row: usize,
        column: String,
        value: String,
    },

    #[error("target column {0:?} not found")]
    TargetNotFound(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("covariate index {index} out of range for p = {p}")]
    FeatureOutOfRange { index: usize, p: usize },

    #[error("no observation is out-of-bag for any tree")]
    NoOobObservations,

    #[error("block {block} of trees has no out-of-bag observation")]
    EmptyBlock { block: usize },

    #[error("response variance is zero")]
    ZeroVariance,

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("unknown importance method {0:?}")]
    UnknownMethod(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
