use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: invalid JSON: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: record {record}: {message}")]
    Parse {
        context: String,
        record: usize,
        message: String,
    },

    #[error("unknown action label {0:?}")]
    UnknownLabel(String),

    #[error("class {class} has no instances in the training split; weights are undefined")]
    EmptyClass { class: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{variant} assignment requires model outputs ({what})")]
    MissingOutputs { variant: String, what: &'static str },

    #[error("invalid model output: {0}")]
    InvalidOutput(String),

    #[error("time target {time_s} s outside anticipation window [0, {window_s})")]
    TimeOutOfWindow { time_s: f64, window_s: f64 },

    #[error("prediction {index}: {message}")]
    Prediction { index: usize, message: String },
}
