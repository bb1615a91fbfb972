use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid instance: {0}")]
    Validation(String),

    #[error("failed to parse instance: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("adversary did not converge after {iterations} iterations (phi = {phi}, residual = {residual:e})")]
    AdversaryNotConverged {
        iterations: usize,
        phi: f64,
        residual: f64,
        eta: Vec<f64>,
    },

    #[error("{0} requires the MNL choice model")]
    UnsupportedModel(&'static str),

    #[error("outer approximation stopped after {iterations} iterations with gap {gap:e}")]
    IterationLimit {
        iterations: usize,
        incumbent: Vec<usize>,
        value: f64,
        gap: f64,
    },

    #[error("enumeration of {count} subsets exceeds the budget of {budget}")]
    EnumerationBudget { count: u128, budget: u128 },
}

pub type Result<T> = std::result::Result<T, Error>;
