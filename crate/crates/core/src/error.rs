use std::path::PathBuf;

use thiserror::Error;

use crate::model::FeasibilityReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {what} = {value:e} ({reason})")]
    Domain {
        what: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("user {user}: minimum power {p_min:e} W is below the secrecy threshold {threshold:e} W")]
    SecrecyPrecondition {
        user: usize,
        p_min: f64,
        threshold: f64,
    },

    #[error("user {user}: non-positive rate {rate:e} bit/s")]
    NonPositiveRate { user: usize, rate: f64 },

    #[error("user {user}: surrogate rate is non-positive over the whole bandwidth range")]
    InfeasibleRate { user: usize },

    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    #[error("infeasible allocation:\n{0}")]
    Infeasible(FeasibilityReport),

    #[error("grid of {points} evaluations exceeds the guard of {limit}")]
    GridTooLarge { points: f64, limit: f64 },

    #[error("grid search supports at most 3 users, got {0}")]
    TooManyUsers(usize),

    #[error("non-finite function value at {at:?}")]
    NonFinite { at: Vec<f64> },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, reason: &'static str) -> Self {
        Error::Domain {
            what,
            value,
            reason,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
