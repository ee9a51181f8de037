use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IffError {
    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The partner channel cannot reproduce the lead user's image at the relay.
    #[error("signal alignment infeasible for pair {pair} (relative residual {residual:.3e})")]
    AlignmentRankDeficient { pair: usize, residual: f64 },

    #[error("lattice enumeration exceeded {cap} candidates after {retries} radius reductions")]
    EnumerationOverflow { cap: usize, retries: usize },

    #[error("oracle input too large: {0}")]
    OracleTooLarge(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

pub type Result<T> = std::result::Result<T, IffError>;
