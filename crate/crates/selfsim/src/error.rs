//! Error type shared by all modules.

use thiserror::Error;

/// Errors produced by the library.
///
/// Precision failures carry their best certified bracket (converted to
/// `f64`) so callers can still report partial results.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid similitude: {0}")]
    InvalidSimilitude(String),

    #[error("invalid ifs: {0}")]
    InvalidIfs(String),

    #[error("invalid word: letter {letter} out of range for {n} maps")]
    InvalidWord { letter: usize, n: usize },

    #[error("incompatible systems: {0}")]
    IncompatibleSystems(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("strong separation not certified: {0}")]
    SscUncertified(String),

    #[error("precision target unreachable ({context}); best bracket [{lo}, {hi}]")]
    Precision { context: String, lo: f64, hi: f64 },

    #[error("precondition unverified: {0}")]
    PreconditionUnverified(String),

    #[error("unbounded density: measure lower bound is zero at evaluation tolerance")]
    UnboundedDensity,

    #[error("empty summary: no certified records")]
    EmptySummary,
}

pub type Result<T> = std::result::Result<T, Error>;
