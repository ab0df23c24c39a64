//! Error types shared by all modules.

use thiserror::Error;

/// Errors produced by the laboratory.
///
/// The split matters to callers: `Domain` and `Precondition` mean the input
/// was malformed or outside the contract; the remaining variants are
/// numerical-stability failures where no trustworthy answer exists and no
/// partial result is returned.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input data (bad sizes, grids, or parameter ranges).
    #[error("domain error: {0}")]
    Domain(String),

    /// A stated precondition of an operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A symbol has an eigenvalue inside the zero band; the Calderon
    /// subspace is undefined there.
    #[error("degenerate symbol: {0}")]
    DegenerateSymbol(String),

    /// The fitted spectral tail deviates from linear Weyl growth; the
    /// regularized eta sum cannot be trusted.
    #[error("unresolved tail: {0}")]
    UnresolvedTail(String),

    /// An eigenvalue sits in the ambiguity band between "kernel" and
    /// "genuinely nonzero".
    #[error("kernel ambiguity: {0}")]
    KernelAmbiguity(String),

    /// Consecutive operators along a path move eigenvalues too far for
    /// sorted-order matching to be unambiguous.
    #[error("path too coarse: {0}")]
    PathTooCoarse(String),

    /// The singular-value gap is too narrow to decide the rank.
    #[error("ill-conditioned rank decision: {0}")]
    IllConditionedRank(String),

    /// An index did not survive the mandatory grid-refinement protocol.
    #[error("unstable index: {0}")]
    UnstableIndex(String),
}

impl Error {
    /// True for failures of numerical stability (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::Domain(_) | Error::Precondition(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
