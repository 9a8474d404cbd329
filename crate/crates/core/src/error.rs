//! Error type shared across the crate.

/// Errors surfaced by oracles, estimators, and drivers.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    /// Malformed or out-of-range input.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A dense linear solve produced an unacceptable residual. For a
    /// discounted system this signals malformed input, not a property of
    /// the method.
    #[error("linear solve failed: {0}")]
    SingularSystem(String),
    /// The induced chain has more than one closed communicating class, so
    /// no unique stationary distribution exists.
    #[error("induced Markov chain is not irreducible")]
    NotIrreducible,
    /// The proximal-step dual multiplier could not be bracketed. Signals
    /// overflow-scale inputs to the mirror-descent subproblem.
    #[error("bisection failed to bracket the prox multiplier")]
    BisectionFailed,
    /// The sample budget ran out before the stopping condition held. Per
    /// the sampling-cost analysis this means the current chain mixes too
    /// slowly or some state is nearly unreachable.
    #[error("sample budget of {budget} exhausted")]
    BudgetExceeded {
        /// The cap that was hit.
        budget: u64,
    },
    /// An aggregation step received no candidates.
    #[error("no candidates supplied")]
    EmptyCandidates,
}

pub type Result<T> = std::result::Result<T, CoreError>;
