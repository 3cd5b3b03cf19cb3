//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The integrator produced a non-finite state. Carries the time and a
    /// short diagnostic of the offending entries.
    #[error("numerical blowup at t = {time}: {detail}")]
    NumericalBlowup { time: f64, detail: String },

    #[error("dimension cap exceeded: {0}")]
    DimensionCap(String),

    #[error("query error: {0}")]
    Query(String),

    /// Estimators refuse to run with fewer than 100 replicas; the batch-means
    /// standard error is unreliable below that.
    #[error("insufficient replicas: {0} (minimum 100)")]
    InsufficientReplicas(usize),

    #[error("insufficient signal: {0}")]
    InsufficientSignal(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
