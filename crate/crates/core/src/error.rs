use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("weights file has no tensor named `{0}`")]
    MissingParameter(String),

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("collection does not match the active split: {0}")]
    CollectionMismatch(String),

    #[error("distribution rejected: histogram SSE {sse:.5} exceeds threshold {threshold:.5}")]
    SseRejected { sse: f64, threshold: f64 },

    #[error(
        "noise learning exhausted its budget after {iterations} iterations: \
         {accepted}/{target} distributions collected (best holdout accuracy {best_accuracy:.4}, \
         required {required_accuracy:.4})"
    )]
    BudgetExhausted {
        iterations: usize,
        accepted: usize,
        target: usize,
        best_accuracy: f64,
        required_accuracy: f64,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("server replied with error: {0}")]
    Remote(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(context: impl Into<String>, expected: &[usize], actual: &[usize]) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }
}
