use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch, expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{op}: input contains a non-finite value")]
    NonFinite { op: &'static str },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("dictionary has no nonzero columns")]
    ZeroDictionary,
    #[error("dictionary column {index} has norm {norm}, expected 0 or 1")]
    UnnormalizedColumn { index: usize, norm: f64 },
    #[error("exhaustive search limited to p <= {max_p} and max_k <= {max_k_limit}, got p = {p}, max_k = {max_k}")]
    OracleGuard {
        p: usize,
        max_k: usize,
        max_p: usize,
        max_k_limit: usize,
    },
    #[error("mutual coherence needs at least two nonzero columns, found {0}")]
    TooFewAtoms(usize),
    #[error("no class labels")]
    EmptyLabels,
    #[error("no training samples")]
    EmptyTrainingSet,
    #[error("no test samples")]
    EmptyTestSet,
    #[error("image is empty")]
    EmptyImage,
    #[error("invalid filename {name:?}: bad {component} ({reason})")]
    Filename {
        name: String,
        component: &'static str,
        reason: String,
    },
    #[error("cannot decode image {path}: {reason}")]
    Image { path: PathBuf, reason: String },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Errors raised while decoding a dictionary file.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes {found:?}, expected \"SPKD\"")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported dictionary format version {found} (this build reads {expected})")]
    UnsupportedVersion { found: u16, expected: u16 },
    #[error("dictionary file truncated at byte offset {offset}: needed {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("malformed dictionary file at byte offset {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
}
