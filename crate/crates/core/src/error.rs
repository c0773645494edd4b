use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite values at instance {instance}")]
    NonFinite { instance: usize },

    #[error("need at least two classes, found {0}")]
    SingleClass(usize),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("class {class} has {count} members, fewer than the {folds} folds requested")]
    TooFewMembers {
        class: usize,
        count: usize,
        folds: usize,
    },

    #[error("series length {series_length} is shorter than the kernel length {kernel_length}")]
    SeriesTooShort {
        series_length: usize,
        kernel_length: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("test-split data reached a fit phase ({0})")]
    TestDataInFit(&'static str),

    #[error("{0}")]
    Undefined(String),

    #[error("blob: {0}")]
    Blob(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("wall-clock timeout of {0:.1}s exceeded")]
    Timeout(f64),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
