use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("vector norm below 1e-12")]
    ZeroNormVector,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("loss evaluated to a non-finite value")]
    NonFiniteLoss,
    #[error("too few points: {points} rows for {k} clusters")]
    TooFewPoints { points: usize, k: usize },
    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("bad magic bytes, expected EMB1")]
    MagicMismatch,
    #[error("file truncated: expected {expected} payload bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("manifest lists {manifest} ids but table has {rows} rows")]
    ManifestMismatch { manifest: usize, rows: usize },
    #[error("duplicate item id {0:?}")]
    DuplicateId(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("no co-occurrence pairs to train on")]
    EmptyPairs,
    #[error("not enough eligible clusters: need {needed}, have {available}")]
    NoEligibleClusters { needed: usize, available: usize },
    #[error("unknown id {0:?}")]
    UnknownId(String),
    #[error("evaluation set is empty")]
    EmptyEval,
    #[error("every popularity count is zero")]
    AllZeroPopularity,

    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::DimMismatch { expected, got })
        }
    }
}
