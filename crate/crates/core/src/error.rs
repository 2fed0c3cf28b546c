use crate::domain::Violation;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid point: {}", join_violations(.0))]
    InvalidPoint(Vec<Violation>),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// The jittered correlation matrix could not be factorized even at the jitter cap.
    #[error("correlation matrix is not positive definite at jitter {jitter:e} (params {params:?})")]
    Singular { jitter: f64, params: Vec<f64> },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("all {} starts failed: {}", .failures.len(), .failures.join("; "))]
    AllStartsFailed { failures: Vec<String> },

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    #[error("input outside the function domain: {0}")]
    OutOfDomain(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
