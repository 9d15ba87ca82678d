//! Crate-wide error type.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A weight vector summed to zero and cannot be normalized.
    #[error("all weights are zero")]
    ZeroMass,

    /// An exact enumeration would exceed a configured cap.
    #[error("{what} requires {required} entries, cap is {cap}")]
    CapExceeded {
        what: &'static str,
        required: u128,
        cap: u128,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A transition matrix row does not sum to one.
    #[error("transition row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },

    /// A conditioning event has probability zero under the joint table.
    /// In exact evaluation this signals a caller bug or an ill-posed run,
    /// never something to paper over with a fallback.
    #[error("conditioning event has zero probability: {context}")]
    ZeroContext { context: String },

    /// KL is infinite, or a replayed token has zero conditional probability.
    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A certified inequality failed on computed values. This is a
    /// build-stopping defect, not a tolerated outcome.
    #[error("bound violated: {name} = {value} exceeds {bound}")]
    BoundViolated {
        name: String,
        value: f64,
        bound: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
