use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("tenability violation at step {step}: color {color} would become negative")]
    Tenability { step: u64, color: usize },
    #[error("enumeration budget exceeded: {0} histories")]
    Budget(u128),
    #[error("series failed to converge after {terms} terms (last term {last_term:e}, partial sum {partial:e})")]
    NonConvergence { terms: usize, last_term: f64, partial: f64 },
    #[error("cancellation guard: {0}")]
    Cancellation(String),
    #[error("decomposition mismatch at s={s}: expected {expected}, got {got}")]
    DecompositionMismatch { s: usize, expected: f64, got: f64 },
    #[error("malformed input at position {position}: {message}")]
    Malformed { position: usize, message: String },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
