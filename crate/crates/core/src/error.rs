use thiserror::Error;

/// Errors raised by the simulator and optimizers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("capacitance matrix is not symmetric (max |C - C^T| = {max_asym:e})")]
    NotSymmetric { max_asym: f64 },

    #[error("frequency must be positive, got {0} Hz")]
    NonPositiveFrequency(f64),

    #[error("singular matrix in {context} (condition estimate {condition:e})")]
    Singular { context: &'static str, condition: f64 },

    #[error("matrix in {context} is not Hermitian positive definite")]
    NotPositiveDefinite { context: &'static str },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid permutation matrix: {0}")]
    InvalidPermutation(String),

    #[error("power bisection failed to bracket P_max = {p_max} W after {doublings} doublings")]
    BisectionBracket { p_max: f64, doublings: usize },

    #[error("Dykstra projection did not converge within {0} iterations")]
    DykstraNoConvergence(usize),

    #[error("network graph is disconnected")]
    DisconnectedGraph,

    #[error("adaptive weights need at least as many users as base stations (U = {users}, B = {stations})")]
    TooFewUsers { users: usize, stations: usize },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            e @ Error::AtIteration { .. } => e,
            e => Error::AtIteration {
                iteration,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
