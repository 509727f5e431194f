//! Error type shared across the crate.

use thiserror::Error;

/// Errors surfaced by exact-arithmetic routines.
///
/// Most library functions are total on their documented domains and panic on
/// programmer error (e.g. mixing residues of different moduli); `Error` is
/// reserved for data-dependent failures a caller can meaningfully handle.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violated a documented domain restriction.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An integer exceeded the supported factorization range.
    #[error("factorization out of range: {0}")]
    FactorRange(u64),

    /// A lattice was expected to be a proper ideal of a given order but is not.
    #[error("lattice is not a proper ideal of the requested order: {0}")]
    NotProper(String),

    /// A bounded search for an auxiliary ideal or prime came up empty.
    #[error("bounded search failed: {0}")]
    SearchExhausted(String),

    /// A q-expansion was not in the span required by the requested operation.
    #[error("q-expansion not in the stabilised span: {0}")]
    NotInSpan(String),

    /// Iteration failed to stabilise within the allowed number of steps.
    #[error("no stabilisation within {0} iterations")]
    NoStabilization(usize),

    /// Cache file I/O or deserialization failure.
    #[error("cache error: {0}")]
    Cache(String),
}
