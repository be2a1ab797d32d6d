use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: duplicate entry `{key}`")]
    Duplicate { line: usize, key: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("tag `{0}` normalizes to no tokens")]
    EmptyTag(String),

    #[error("zero denominator in update for node `{0}` (no anchor and no neighbours)")]
    ZeroDenominator(String),

    #[error("singular system: component containing `{0}` has no anchored node")]
    Singular(String),

    #[error("not enough known concepts: need at least {needed}, have {have}")]
    TooFewKnown { needed: usize, have: usize },

    #[error("undefined AUC: labels contain {positives} positives and {negatives} negatives")]
    UndefinedAuc { positives: usize, negatives: usize },

    #[error("fold {0} has no target tag with both positive and negative items")]
    NoQualifyingTag(usize),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
