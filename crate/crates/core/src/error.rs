use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::heads::HeadId;

/// Everything that can go wrong while loading, extracting or scoring.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: record exceeds the {limit}-byte size cap")]
    RecordTooLarge { line: usize, limit: usize },

    #[error(
        "sentence {sentence}: row {row} of head {head} sums to {sum} (expected 1 within {tolerance})"
    )]
    RowSum {
        sentence: String,
        head: HeadId,
        row: usize,
        sum: f64,
        tolerance: f64,
    },

    #[error("sentence {sentence}: {message}")]
    Validation { sentence: String, message: String },

    #[error("malformed segmentation: {0}")]
    Segmentation(String),

    #[error("bracketed tree, byte offset {offset}: {message}")]
    Bracket { offset: usize, message: String },

    #[error("alignment error in sentence {sentence}: {message}")]
    Alignment { sentence: String, message: String },

    #[error("invalid head mask: {0}")]
    Mask(String),

    #[error("span ({start}, {end}) lies outside a sentence of length {len}")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
