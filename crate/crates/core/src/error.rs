use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{malformed} of {total} lines malformed in {path} (lines {lines:?})")]
    TooManyMalformed {
        path: PathBuf,
        malformed: usize,
        total: usize,
        lines: Vec<usize>,
    },

    #[error("conflicting labels for user {0}")]
    ConflictingLabel(String),

    #[error("{count} users have no label (first: {first})")]
    Unlabeled { count: usize, first: String },

    #[error("layer node counts differ: expected {expected}, found {found}")]
    NodeCountMismatch { expected: usize, found: usize },

    #[error("unlabeled endpoint {0} in homophily computation")]
    UnlabeledEndpoint(usize),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("feature signature mismatch: checkpoint has d_c={ckpt_dc}, d_g={ckpt_dg}; data has d_c={data_dc}, d_g={data_dg}")]
    Signature {
        ckpt_dc: usize,
        ckpt_dg: usize,
        data_dc: usize,
        data_dg: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no positive labels available in the training set")]
    NoPositives,

    #[error("loss node must be a 1x1 tensor recorded on this tape, got shape {0:?}")]
    NotScalarLoss((usize, usize)),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
