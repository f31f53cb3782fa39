use std::fmt;

use speqrng::Error;

/// Process exit codes, one per error class.
pub mod exit {
    pub const OK: i32 = 0;
    /// Malformed command line (reported by the argument parser).
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const IO: i32 = 4;
    /// Event or symbol input that cannot be analysed as given.
    pub const INPUT: i32 = 5;
    pub const INSUFFICIENT_DATA: i32 = 6;
    /// Parameters outside the model's domain.
    pub const MODEL: i32 = 7;
    pub const OPTIMIZER: i32 = 8;
    pub const ENTROPY_BUDGET: i32 = 9;
}

/// A library error tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct CliError {
    pub stage: &'static str,
    pub source: Error,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match &self.source {
            Error::Config(_) | Error::Json(_) => exit::CONFIG,
            Error::Io(_) => exit::IO,
            Error::Parse(_)
            | Error::UnsortedInput { .. }
            | Error::ChannelOutOfRange { .. }
            | Error::EmptySubinterval { .. }
            | Error::DegenerateData(_) => exit::INPUT,
            Error::InsufficientData(_) => exit::INSUFFICIENT_DATA,
            Error::InvalidParameter(_) | Error::InvalidState(_) | Error::SurvivalTraceZero { .. } => exit::MODEL,
            Error::OptimizerDiverged(_) => exit::OPTIMIZER,
            Error::OutputLengthNonpositive(_) => exit::ENTROPY_BUDGET,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.source)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Attaches a stage name to library results.
pub trait Stage<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T, E: Into<Error>> Stage<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|e| CliError {
            stage,
            source: e.into(),
        })
    }
}
