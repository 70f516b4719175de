use thiserror::Error;

/// Errors raised by the policy-selection pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),

    #[error("overlap violation in cell {cell}: propensity {propensity} outside [{lower}, {upper}]")]
    OverlapViolation {
        cell: u32,
        propensity: f64,
        lower: f64,
        upper: f64,
    },

    #[error("degenerate cell {cell}: no records with d = {missing_arm}")]
    DegenerateCell { cell: u32, missing_arm: u8 },

    #[error("grid has {size} policies, above the limit of {limit}; pass the large-grid override to proceed")]
    GridTooLarge { size: usize, limit: usize },

    #[error("matrix is not positive semidefinite (largest jitter tried: {jitter:e})")]
    NotPsd { jitter: f64 },

    #[error("no policy survives the sigma floor {floor:e}")]
    EmptyGrid { floor: f64 },

    #[error("iteration {index} (seed {seed}) failed: {source}")]
    Iteration {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// True for failures caused by degenerate or non-conforming numerics
    /// rather than malformed input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::OverlapViolation { .. }
            | Error::DegenerateCell { .. }
            | Error::NotPsd { .. }
            | Error::EmptyGrid { .. }
            | Error::Invariant(_) => true,
            Error::Iteration { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
