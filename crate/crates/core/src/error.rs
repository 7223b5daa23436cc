use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("design matrix is singular or rank-deficient (condition estimate {condition:.3e})")]
    SingularDesign { condition: f64 },

    #[error("standard deviation must be non-negative, got {0}")]
    NegativeStd(f64),

    #[error("gradient contained a non-finite value at step {step}")]
    NonFiniteGradient { step: usize },

    #[error("training diverged: loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("network architecture needs at least an input and an output layer")]
    EmptyArchitecture,

    #[error("token {token} is outside the vocabulary of size {vocab_size}")]
    InvalidToken { token: usize, vocab_size: usize },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("at least two students are required, got {0}")]
    TooFewStudents(usize),

    #[error("at least two responses are required, got {0}")]
    TooFewResponses(usize),

    #[error("not a probability distribution: {0}")]
    NotADistribution(String),

    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,

    #[error("regression is degenerate: {0}")]
    DegenerateRegression(String),

    #[error("variances must be positive, got ({0}, {1})")]
    NonPositiveVariance(f64, f64),

    #[error("non-finite value: {0}")]
    NonFiniteValue(String),

    #[error("malformed model document: {0}")]
    Serialization(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("student {index} failed: {source}")]
    StudentFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
