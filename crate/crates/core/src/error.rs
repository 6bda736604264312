use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is not connected ({zero_eigenvalues} eigenvalues below the zero threshold)")]
    NotConnected { zero_eigenvalues: usize },

    #[error("node index {index} out of range for {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is singular or numerically singular")]
    Singular,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("integration step must be positive, got {0}")]
    NonpositiveStep(f64),

    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),

    #[error("eigenvalue iteration did not converge")]
    EigenNonConvergence,

    #[error("lyapunov certificate {which} has non-positive eigenvalue {min_eigenvalue:e}")]
    PositivityViolation {
        which: &'static str,
        min_eigenvalue: f64,
    },

    #[error(
        "inadmissible correction at node {node}, t = {time}: frequency {frequency} outside ({omega_min}, {omega_max})"
    )]
    Inadmissible {
        node: usize,
        time: f64,
        frequency: f64,
        omega_min: f64,
        omega_max: f64,
    },

    #[error("phase history of node {node} does not cover t = {time} (starts at {start})")]
    HistoryGap { node: usize, time: f64, start: f64 },

    #[error("target phase {target} is behind current phase {current}")]
    TargetInPast { target: f64, current: f64 },

    #[error("trace windows do not overlap")]
    GridMismatch,

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("{field}: {message}")]
    Validation { field: String, message: String },

    #[error("missing field {0}")]
    MissingField(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (scenario or override contents).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation { .. }
                | Error::MissingField(_)
                | Error::InvalidGraph(_)
                | Error::NotConnected { .. }
                | Error::IndexOutOfRange { .. }
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Csv(_) | Error::Json(_))
    }
}
