use thiserror::Error;

/// Errors raised by state construction, conditioning and criterion evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("space mismatch: expected {expected}, found {found}")]
    SpaceMismatch { expected: String, found: String },

    #[error("operation needs a {expected} space, got a {found} space")]
    WrongKind { expected: &'static str, found: &'static str },

    #[error("mode index {index} out of range for a space with {modes} modes")]
    InvalidMode { index: usize, modes: usize },

    #[error("operator `{label}` is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { label: String, deviation: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("state is not bipartite")]
    NotBipartite,

    #[error("observable `{label}` does not act on subsystem {party}")]
    WrongSubsystem { label: String, party: &'static str },

    #[error("empty branch: outcome probability {probability:.3e} is below threshold {threshold:.1e}")]
    EmptyBranch { probability: f64, threshold: f64 },

    #[error("all bins are empty")]
    AllBinsEmpty,

    #[error(
        "truncation overflow: cutoff {cutoff} discards mass {discarded:.3e}, \
         required below {tolerance:.1e}"
    )]
    TruncationOverflow {
        cutoff: usize,
        discarded: f64,
        tolerance: f64,
    },

    #[error("underpopulated bins: {0}")]
    Underpopulated(String),

    #[error("missing statistic: {0}")]
    MissingStatistic(String),

    #[error("non-convergence: {0}")]
    NonConvergence(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures of the numerics (truncation, convergence, sampling
    /// support) as opposed to malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::TruncationOverflow { .. }
                | Error::NonConvergence(_)
                | Error::Underpopulated(_)
                | Error::EmptyBranch { .. }
                | Error::AllBinsEmpty
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
