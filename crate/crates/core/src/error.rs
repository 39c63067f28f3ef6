use thiserror::Error;

/// Errors raised by game construction, exact computation and the estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapleyError {
    #[error("invalid coalition: player {player} is out of range for a {n}-player game")]
    InvalidCoalition { player: usize, n: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot construct game: {0}")]
    Construction(String),

    #[error("{what} is infeasible for n = {n} (limit is {limit})")]
    Infeasible {
        what: &'static str,
        n: usize,
        limit: usize,
    },

    #[error("budget of {budget} samples is too small for {strata} strata")]
    BudgetTooSmall { budget: u64, strata: usize },

    #[error("no closed form for the {0} family")]
    UnsupportedFamily(String),

    #[error("no ground truth available: {0}")]
    NoGroundTruth(String),

    #[error("malformed game definition: {0}")]
    Parse(String),
}

pub type Result<T, E = ShapleyError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> ShapleyError {
    ShapleyError::InvalidArgument(msg.into())
}
