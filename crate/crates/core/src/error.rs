use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate training data for head `{head}`: {reason}")]
    DegenerateData { head: String, reason: String },

    #[error("training diverged at epoch {epoch}: {reason}")]
    Divergence { epoch: usize, reason: String },

    #[error("rate calibration failed: target event {target_event:.3} / non-selection {target_nonselect:.3}, achieved event {achieved_event:.3} / non-selection {achieved_nonselect:.3}")]
    Calibration {
        target_event: f64,
        target_nonselect: f64,
        achieved_event: f64,
        achieved_nonselect: f64,
    },

    #[error("zero-variance selection projection after {retries} retries")]
    ZeroVariance { retries: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {value:?} is not numeric")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("kernel bandwidth {bandwidth} too small: {reason}")]
    BandwidthTooSmall { bandwidth: f64, reason: String },

    #[error("method `{method}` requires {stratum} rows in the training data")]
    MissingStratum { method: String, stratum: String },

    #[error("AUC undefined: {positives} positive and {negatives} negative labels")]
    UndefinedAuc { positives: usize, negatives: usize },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),

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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
