use thiserror::Error;

/// Everything that can go wrong while building or analysing an urn chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("not a bijection of 1..={degree}: {images:?}")]
    NonBijective { degree: usize, images: Vec<usize> },

    #[error("degree mismatch: expected {expected}, found {found}")]
    DegreeMismatch { expected: usize, found: usize },

    #[error("invalid margins: {0}")]
    InvalidMargins(String),

    #[error("configuration violates the margins: {0}")]
    MarginViolation(String),

    #[error("{what} exceeds cap {cap} (needs {needed})")]
    CapExceeded {
        what: &'static str,
        cap: u128,
        needed: u128,
    },

    #[error("chain is reducible: {0}")]
    Reducible(String),

    #[error("state subset is empty")]
    EmptySet,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("distribution is not stationary for the kernel (residual {0:e})")]
    NotStationary(f64),

    #[error("kernel is not reversible (detailed balance residual {0:e})")]
    NotReversible(f64),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("no path from state {from} to state {to} in the target graph")]
    Unreachable { from: usize, to: usize },

    #[error("malformed path family: {0}")]
    MalformedPaths(String),

    #[error("eigenvalue iteration did not converge")]
    NoConvergence,

    #[error("step budget of {budget} jumps exhausted")]
    BudgetExhausted { budget: u64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
