use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("member `{member}` is labelled with group `{first}` and later with `{second}`")]
    InconsistentGroup {
        member: String,
        first: String,
        second: String,
    },

    #[error("row {row}: column `{column}` has non-numeric value `{value}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("unknown group `{0}`")]
    UnknownGroup(String),

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

    #[error("no kernel mass at s = {s} (h = {h}); try a larger bandwidth")]
    NoMass { s: f64, h: f64 },

    #[error("insufficient clusters: {found} member(s) carry kernel mass, at least 2 are needed")]
    InsufficientClusters { found: usize },

    #[error("multivariate estimation supports at most 4 objectives, got {0}")]
    Dimensionality(usize),

    #[error("degenerate outcome in group `{0}`: both outcome classes are required")]
    DegenerateOutcome(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no usable grid points")]
    EmptyGrid,

    #[error("predictor is not invertible: {0}")]
    NonInvertible(String),

    #[error("no solution in range: {0}")]
    NoSolution(String),

    #[error("{failed} of {total} bootstrap replicates failed")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by malformed input rather than by a
    /// statistical procedure (the CLI maps these to different exit codes).
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Schema(_)
                | Error::InconsistentGroup { .. }
                | Error::Parse { .. }
                | Error::InvalidArgument(_)
                | Error::EmptyDataset
                | Error::UnknownGroup(_)
                | Error::Io { .. }
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
