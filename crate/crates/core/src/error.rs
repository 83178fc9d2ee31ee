use std::io;

use thiserror::Error;

use crate::WordId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("word id {id} is outside the vocabulary (size {size})")]
    VocabularyMismatch { id: WordId, size: usize },
    #[error("context is empty")]
    EmptyContext,
    #[error("distribution has no probability mass")]
    EmptyDistribution,
    #[error("list length K must be at least 1")]
    InvalidK,
    #[error("corpus contains no tokens")]
    EmptyCorpus,
    #[error("corpus has {0} sequences; at least 10 are needed to split")]
    TooFewSequences(usize),
    #[error("mixture weight out of range: {0}")]
    WeightOutOfRange(String),
    #[error("validation query set is empty")]
    EmptyValidationSet,
    #[error("no query received a recommendation")]
    NoUsableQueries,
    #[error("no query received recommendations from both models")]
    NoComparableQueries,
    #[error("training diverged in epoch {epoch} (loss {loss})")]
    DivergenceDetected { epoch: usize, loss: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed {what} at line {line}: {msg}")]
    Format {
        what: &'static str,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            what,
            line,
            msg: msg.into(),
        }
    }
}
