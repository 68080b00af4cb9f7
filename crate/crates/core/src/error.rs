use thiserror::Error;

/// Errors raised by the estimation, simulation and training routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty reward group")]
    EmptyGroup,
    #[error("reward at index {index} is {value}, expected 0 or 1")]
    NonBinaryReward { index: usize, value: u8 },
    #[error("discount factor out of range: {0} (expected 0 < lambda <= 1)")]
    DiscountOutOfRange(f64),
    #[error("empty group size")]
    EmptyGroupSize,
    #[error("invalid posterior parameters alpha={alpha}, beta={beta}")]
    InvalidPosterior { alpha: f64, beta: f64 },
    #[error("epoch count must be at least 1")]
    ZeroEpochs,
    #[error("probability out of range: {0}")]
    ProbabilityOutOfRange(f64),
    #[error("empty probability sequence")]
    EmptySequence,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("DBB advantages require a posterior state")]
    MissingPosterior,
    #[error("variance collapse")]
    VarianceCollapse,
    #[error("non-finite surrogate gradient")]
    NonFiniteGradient,
    #[error("no records at epoch {0}")]
    NoRecordsAtEpoch(usize),
    #[error("argmin needs at least two distinct lambdas, found {0}")]
    TooFewLambdas(usize),
    #[error("records at epoch {0} mix several group sizes")]
    MixedGroupSizes(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
