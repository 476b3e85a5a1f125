use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{context}: expected dimension {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value during integration at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("propagation of dyad {label} failed: {source}")]
    Dyad {
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error(
        "sweep aborted at delta_g = {delta_g}, delta_v = {delta_v} after {completed} points: {source}"
    )]
    SweepPoint {
        delta_g: f64,
        delta_v: f64,
        completed: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {message}")]
    ConfigFile { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
