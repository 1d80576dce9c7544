use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("instance with {size} support points is too large for exact mode (cap {cap})")]
    TooLargeForExact { size: usize, cap: usize },

    #[error("drift model error: {message} (probe: {probe})")]
    Model { message: String, probe: String },

    #[error("non-finite position for particle {particle} at step {step}")]
    NonFinite { particle: usize, step: usize },

    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("assumption check failed: {0}")]
    AssumptionViolated(String),

    #[error("time {time} is not covered by the simulation record: {reason}")]
    NotCovered { time: f64, reason: String },

    #[error("cutoff mismatch: {0}")]
    CutoffMismatch(String),

    #[error("CFL violation: {0}")]
    Cfl(String),

    #[error("domain too small: {0}; enlarge the spatial domain")]
    DomainTooSmall(String),

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("reference resolution insufficient: {0}")]
    ReferenceBudget(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures caused by numerics (non-finite values, CFL, domain
    /// exhaustion, reference budget) rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFinite { .. }
            | Error::Cfl(_)
            | Error::DomainTooSmall(_)
            | Error::ReferenceBudget(_)
            | Error::Degenerate(_) => true,
            Error::Step { source, .. } => source.is_numerical(),
            Error::Model { .. } => true,
            _ => false,
        }
    }
}
