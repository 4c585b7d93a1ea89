use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("symbol {symbol} at position {position} is outside the alphabet [0, {alphabet})")]
    OutOfRangeSymbol {
        symbol: usize,
        position: usize,
        alphabet: usize,
    },

    #[error("cannot normalize empty counts")]
    EmptyCounts,

    #[error("probabilities must be nonnegative and sum to 1 (sum = {sum})")]
    InvalidDistribution { sum: f64 },

    #[error("entropy estimator needs at least {required} samples, got {got}")]
    TooFewSamples { required: u64, got: u64 },

    #[error("monomial degree {degree} exceeds sample size {n}")]
    DegreeExceedsSamples { degree: u64, n: u64 },

    #[error("Remez exchange did not converge for degree {degree}: {reason}")]
    ConvergenceFailure { degree: usize, reason: String },

    #[error("matrix is not square: {rows} rows, row {row} has {len} entries")]
    NotSquare { rows: usize, row: usize, len: usize },

    #[error("matrix is not stochastic: row {row}: {reason}")]
    NotStochastic { row: usize, reason: String },

    #[error("chain is not irreducible: {closed_classes} closed communicating classes")]
    NotIrreducible { closed_classes: usize },

    #[error("chain is not reversible: detailed balance violated by {violation:e}")]
    NotReversible { violation: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("chain generation failed: {0}")]
    GenerationFailure(String),

    #[error("path too short: {got} transitions, need at least {required}")]
    PathTooShort { required: usize, got: usize },

    #[error("observed transition {from} -> {to} has zero probability")]
    ZeroProbabilityTransition { from: usize, to: usize },

    #[error("invalid UTF-8 input")]
    InvalidEncoding,

    #[error("token stream of length {len} is too short for k = {k}")]
    StreamTooShort { len: usize, k: usize },

    #[error("memory length k = {0} is outside the supported range 1..=5")]
    InvalidOrder(usize),

    #[error("k-gram model has {0} instances; need at least 2")]
    EmptyModel(u64),

    #[error("requested subsample of {size} exceeds the {available} available instances")]
    SizeExceedsCorpus { size: usize, available: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
