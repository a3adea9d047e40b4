use thiserror::Error;

pub type Result<T> = std::result::Result<T, QramError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QramError {
    /// A size did not match the tree geometry (address width, memory length, ...).
    #[error("dimension mismatch: {what} (expected {expected}, found {found})")]
    Dimension {
        what: &'static str,
        expected: u64,
        found: u64,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    /// A protocol step was requested in the wrong phase.
    #[error("protocol order: {0}")]
    ProtocolOrder(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("capacity exceeded: n = {n} but at most {max} is supported here")]
    Capacity { n: u32, max: u32 },

    #[error("dephasing rate {0} outside [0, 1]")]
    InvalidRate(f64),

    #[error("parse error: {0}")]
    Parse(String),
}
