use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Library-level failures. Semantic check failures (an equilibrium condition
/// not holding) are not errors; they are reported in certification reports.
#[derive(Debug, Error)]
pub enum Error {
    /// Bayes update requested at a signal the signaling rule never sends.
    #[error(
        "off-support signal: agent {agent} has zero marginal for signal {signal} \
         at state {state}, joint type {joint_type}"
    )]
    OffSupportSignal {
        agent: usize,
        state: usize,
        joint_type: usize,
        signal: usize,
    },

    /// An exact enumeration would exceed the configured cell cap.
    #[error("enumeration size {required} exceeds cap of {cap} cells")]
    CapExceeded { required: u128, cap: u64 },

    /// Iterative value solve ran out of budget (possible only on corrupted inputs).
    #[error("value solve did not converge within {iterations} iterations (sup-norm change {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Tables passed together do not agree on dimensions.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Configuration file could not be parsed.
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
