use thiserror::Error;

/// Errors raised by environments, recursions, solvers and the tuner.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MfgError {
    #[error("shape mismatch in {what}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        what: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("initial distribution invalid: {0}")]
    InvalidInitialDistribution(String),

    #[error("transition at t={t} is not stochastic for state {state:?}, action {action:?}: {detail}")]
    TransitionNotStochastic {
        t: usize,
        state: Vec<usize>,
        action: Vec<usize>,
        detail: String,
    },

    #[error("reward at t={t}, state {state:?}, action {action:?} is {value}, exceeding r_max={r_max}")]
    RewardOutOfBounds {
        t: usize,
        state: Vec<usize>,
        action: Vec<usize>,
        value: f64,
        r_max: f64,
    },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid mean-field flow: {0}")]
    InvalidFlow(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("non-finite value in {what} at iteration {iteration}")]
    NonFinite { what: String, iteration: usize },

    #[error("unknown {kind} `{name}`; valid choices: {}", .valid.join(", "))]
    Unknown {
        kind: &'static str,
        name: String,
        valid: Vec<String>,
    },

    #[error("environment suite is empty")]
    EmptySuite,
}

impl MfgError {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        MfgError::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    /// True for errors that stem from NaN/inf arithmetic rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, MfgError::NonFinite { .. })
    }
}

pub type Result<T> = std::result::Result<T, MfgError>;
