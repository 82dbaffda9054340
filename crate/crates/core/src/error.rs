// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

/// Errors produced by the emphasis pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("archive format: {0}")]
    Format(String),

    #[error("record {record}: {message}")]
    InvalidRecord { record: String, message: String },

    #[error("record {record}, layer {layer}, head {head}, row {row}: {message}")]
    InvalidAttention {
        record: String,
        layer: usize,
        head: usize,
        row: usize,
        message: String,
    },

    #[error("{method} is unavailable for model {model_id}: no {token} token")]
    MethodUnavailable {
        model_id: String,
        method: &'static str,
        token: &'static str,
    },

    #[error("{what} {value} out of range 1..={max}")]
    OutOfRange {
        what: &'static str,
        value: usize,
        max: usize,
    },

    #[error("sentence {sentence}: {message}")]
    Mismatch { sentence: String, message: String },

    #[error("corpus has no annotations")]
    Unlabeled,

    #[error("{0}")]
    Invalid(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn mismatch(sentence: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Mismatch {
            sentence: sentence.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
