use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum MmlError {
    #[error("score at ({row}, {col}) is {value}; complete preference lists need strictly positive finite scores")]
    NonPositiveEntry { row: usize, col: usize, value: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("market is {n_men}x{n_women}; a square market is required")]
    NonSquare { n_men: usize, n_women: usize },

    #[error("sinkhorn balancing did not converge in {iters} iterations (residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("duplicate latent value in {side} row {row}; reseed")]
    DuplicateValue { side: &'static str, row: usize },

    #[error("n = {n} exceeds the brute-force limit of {max}")]
    TooLarge { n: usize, max: usize },

    #[error("delta = {0} is outside (0, 1)")]
    DeltaOutOfRange(f64),

    #[error("empty sample")]
    EmptySample,

    #[error("rate must be positive and finite, got {0}")]
    NonPositiveRate(f64),

    #[error("sample is degenerate (all zero or non-finite)")]
    DegenerateSample,

    #[error("weight vector sums to {sum}, expected {expected}")]
    NotNormalized { sum: f64, expected: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MmlError> = std::result::Result<T, E>;

impl MmlError {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        MmlError::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
