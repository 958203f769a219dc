use thiserror::Error;

#[derive(Debug, Error)]
pub enum GamError {
    #[error("response must be strictly positive for the gamma family (row {row}: {value})")]
    NonPositiveResponse { row: usize, value: f64 },

    #[error("covariate `{0}` not found")]
    UnknownCovariate(String),

    #[error("term `{0}` not found in fit")]
    UnknownTerm(String),

    #[error("covariate `{name}` has {found} rows, response has {expected}")]
    LengthMismatch {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in covariate `{0}`")]
    NonFiniteCovariate(String),

    #[error("basis rank {0} is below the minimum of 3")]
    RankTooSmall(usize),

    #[error("only penalty order 2 is supported, got {0}")]
    UnsupportedPenaltyOrder(usize),

    #[error("model is over-parameterized: edf {edf:.3} >= n {n}")]
    OverParameterized { edf: f64, n: usize },

    #[error("PIRLS did not converge in {iterations} iterations (deviance trace: {trace:?})")]
    NotConverged { iterations: usize, trace: Vec<f64> },

    #[error("penalized normal equations are singular")]
    Singular,

    #[error("models were fitted to different responses")]
    ResponseMismatch,

    #[error("expected {expected} smoothing parameters, got {found}")]
    LambdaCount { expected: usize, found: usize },

    #[error("empty data")]
    Empty,
}

pub type Result<T> = std::result::Result<T, GamError>;
