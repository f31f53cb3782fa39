use thiserror::Error;

/// Errors raised across the certification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    /// All photons are lost by the lossy evolution; the renormalised
    /// probabilities are undefined at this point.
    #[error("surviving trace {trace:.3e} is below threshold")]
    SurvivalTraceZero { trace: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("optimizer diverged: {0}")]
    OptimizerDiverged(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("timestamps are not sorted (line {line})")]
    UnsortedInput { line: usize },

    #[error("channel {channel} out of range 1..=4 (line {line})")]
    ChannelOutOfRange { channel: i64, line: usize },

    #[error("sub-interval {index} of {k} contains no symbols")]
    EmptySubinterval { index: usize, k: usize },

    #[error("entropy budget exhausted: output length {0} is not positive")]
    OutputLengthNonpositive(i64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
