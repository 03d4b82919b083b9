use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("duplicate record for frame {frame}, pedestrian {pedestrian} (line {line})")]
    DuplicateRecord {
        frame: i64,
        pedestrian: i64,
        line: usize,
    },

    #[error("scene extraction failed: {0}")]
    SceneExtraction(String),

    #[error("predictor error: {0}")]
    Predictor(String),

    #[error("sample budget infeasible: {0}")]
    Budget(String),

    #[error("numeric failure: {msg}")]
    Numeric {
        msg: String,
        /// Best feasible point found before giving up, when one exists.
        incumbent: Option<Box<crate::learner::ChebyshevFit>>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn predictor(msg: impl Into<String>) -> Self {
        Error::Predictor(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
