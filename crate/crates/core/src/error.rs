use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("every position is masked; nothing to attend to")]
    FullyMasked,

    #[error("probability {value} at index {index} is negative")]
    NegativeProbability { index: usize, value: f64 },

    #[error("probabilities sum to {sum}, not 1")]
    NotNormalized { sum: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("exponent {exponent} is outside the f64 exp range")]
    Overflow { exponent: f64 },

    #[error(
        "no root of the invariance constraint for n = {n}, mu = {mu}; \
         smallest feasible n is {min_feasible_n}"
    )]
    NoRoot { n: f64, mu: f64, min_feasible_n: f64 },

    #[error("invalid chunk layout: {0}")]
    InvalidLayout(String),

    #[error("training diverged at step {step}: loss {loss} exceeds {factor}x the initial loss {initial_loss}")]
    Diverged {
        step: usize,
        loss: f64,
        initial_loss: f64,
        factor: f64,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn layout(msg: impl Into<String>) -> Self {
        Error::InvalidLayout(msg.into())
    }
}
