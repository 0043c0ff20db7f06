// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors produced by the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("unknown concept `{0}`")]
    UnknownConcept(String),

    #[error("unknown condition `{0}`")]
    UnknownCondition(String),

    #[error("unknown record `{0}`")]
    UnknownRecord(String),

    #[error("value {value} for `{name}` is outside [0, 1]")]
    OutOfRange { name: String, value: f64 },

    #[error("duplicate edit index {0}")]
    DuplicateIndex(usize),

    #[error("non-finite gradient in parameter block `{0}`")]
    NonFiniteGradient(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("schema hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("extractor transport error: {0}")]
    Transport(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable tag, used in CLI error JSON and HTTP bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Dimension { .. } => "dimension",
            Error::UnknownConcept(_) => "unknown_concept",
            Error::UnknownCondition(_) => "unknown_condition",
            Error::UnknownRecord(_) => "unknown_record",
            Error::OutOfRange { .. } => "out_of_range",
            Error::DuplicateIndex(_) => "duplicate_index",
            Error::NonFiniteGradient(_) => "non_finite_gradient",
            Error::Diverged { .. } => "diverged",
            Error::HashMismatch { .. } => "hash_mismatch",
            Error::MissingInput(_) => "missing_input",
            Error::Transport(_) => "transport",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
