use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("load error in {path}: {message}")]
    Load { path: PathBuf, message: String },

    #[error("column not found: {0}")]
    ColumnNotFound(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("transform error for variable '{variable}' at {date}: {message}")]
    Transform {
        variable: String,
        date: String,
        message: String,
    },

    #[error("cannot standardize variable '{0}': zero variance")]
    ZeroVariance(String),

    #[error("design error: {0}")]
    Design(String),

    #[error("constant design column: variable '{variable}' at lag {lag}")]
    ConstantColumn { variable: String, lag: usize },

    #[error("index out of range: {what} = {index} (limit {limit})")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: matrix '{matrix}' is not positive definite")]
    NotPositiveDefinite { matrix: &'static str },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("sampler failed at iteration {iteration}, learner {learner:?}: {source}")]
    Sampler {
        iteration: usize,
        learner: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration at '{path}': {message}")]
    Config { path: String, message: String },

    #[error("synthetic simulation exploded (|y| > 1e6 at t = {t}); use smaller coefficients")]
    Explosive { t: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn file(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| Error::File {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
