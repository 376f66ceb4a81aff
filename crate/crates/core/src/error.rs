use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::resources::ResourceError;
use crate::schema::SchemaError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Schema(#[from] SchemaError),

    #[error(transparent)]
    Resource(#[from] ResourceError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("n-gram order must be at least 1, got {0}")]
    InvalidOrder(usize),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("trace is empty")]
    EmptyTrace,

    #[error("probability distribution sums to {sum}, expected 1")]
    NotADistribution { sum: f64 },

    #[error("every token with nonzero probability is banned")]
    AllMassBanned,

    #[error("invalid sampler config: {0}")]
    InvalidSampler(String),

    #[error("prompt ranking needs at least {needed} prompts, got {got}")]
    TooFewPrompts { needed: usize, got: usize },

    #[error("principal component removal needs at least 2 vectors, got {0}")]
    BatchTooSmall(usize),

    #[error("vectors in batch have mismatched dimensions ({expected} vs {found})")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("no trace covers the first {horizon} words")]
    NoQualifyingTraces { horizon: usize },

    #[error("nothing to score: {0}")]
    NothingToScore(&'static str),

    #[error("missing score for candidate `{0}`")]
    MissingScore(String),

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("report is empty")]
    EmptyReport,

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
