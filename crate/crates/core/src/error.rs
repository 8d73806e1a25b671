use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown contact formation id {0}")]
    UnknownCf(u32),
    #[error("node timestamp {got} is not after previous node timestamp {prev}")]
    NonMonotonicTimestamp { prev: f64, got: f64 },
    #[error("factor references unknown node {0}")]
    BadNode(usize),
    #[error("invalid factor: {0}")]
    InvalidFactor(String),
    #[error("noise covariance is not symmetric positive definite")]
    NotSpd,
    #[error("singular system: variable block {block} is unconstrained")]
    Singular { block: String },
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersion { expected: u32, found: u32 },
    #[error("no robot record in window ending at t={0}")]
    StreamGap(f64),
    #[error("time regression: {got} after {prev}")]
    TimeRegression { prev: f64, got: f64 },
    #[error("classifier error: {0}")]
    Classifier(String),
    #[error("timestamp mismatch between estimates and truth at index {0}")]
    TimestampMismatch(usize),
    #[error("contact solver did not converge")]
    ContactSolver,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
