use thiserror::Error;

/// Errors produced by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("out of range: {0}")]
    Range(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("event {index} has no user identifier; session consolidation needs one")]
    MissingUser { index: usize },

    #[error("hit ratio is undefined for an empty trace")]
    EmptyTrace,

    #[error("curves are defined on different cache-size grids")]
    GridMismatch,

    #[error("reference hit ratio is zero at cache size {cache_size}")]
    ZeroReference { cache_size: u64 },

    #[error("{0} requires at least two requests")]
    TooFewRequests(&'static str),

    #[error("no estimable documents: no document has two or more requests")]
    NoEstimableDocuments,

    #[error("cache size {cache_size} is larger than the reachable catalog")]
    CacheLargerThanCatalog { cache_size: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
