//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised while constructing or validating game representations.
#[derive(Debug, Error)]
pub enum GameError {
    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),
    #[error("BrokenFlowStructure: {0}")]
    BrokenFlowStructure(String),
    #[error("CyclicTreeplex: the sequence parent relation contains a cycle")]
    CyclicTreeplex,
    #[error("NonFinitePayoff: payoff matrix contains a non-finite entry")]
    NonFinitePayoff,
    #[error("NegativeProbability: behavioral strategy has a negative entry at action {action}")]
    NegativeProbability { action: usize },
    #[error("TooLarge: reduced normal form has more than {cap} pure strategies")]
    TooLarge { cap: usize },
    #[error("NonPositivePlan: realization plan entry {index} is negative")]
    NonPositivePlan { index: usize },
}

/// Errors raised by the equilibrium solvers and backward passes.
#[derive(Debug, Error)]
pub enum SolveError {
    /// The residual was still above tolerance after the iteration budget.
    /// Carries the last iterate so callers can inspect or report it.
    #[error("MaxItersExceeded: residual {residual:.3e} after {iterations} iterations")]
    MaxItersExceeded {
        residual: f64,
        iterations: usize,
        u: Vec<f64>,
        v: Vec<f64>,
    },
    #[error("NumericalBreakdown: {0}")]
    NumericalBreakdown(String),
    #[error("NonPositiveStrategy: strategy vector has a non-positive entry")]
    NonPositiveStrategy,
    #[error("SingularSystem: the KKT matrix could not be factorized")]
    SingularSystem,
    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),
}

/// Errors raised by the parametrized game builders.
#[derive(Debug, Error)]
pub enum BuildError {
    #[error("DegenerateDeck: card weight {index} is too close to 1")]
    DegenerateDeck { index: usize },
    #[error("UnsupportedStages: t = {0} (only 1 and 2 are supported)")]
    UnsupportedStages(u8),
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
}

/// Errors raised by the training loop.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("SolverFailure in batch {batch}: {source}")]
    SolverFailure {
        batch: usize,
        #[source]
        source: SolveError,
    },
    #[error("DivergenceDetected at epoch {epoch}: loss stayed above 10x its initial value")]
    DivergenceDetected {
        epoch: usize,
        /// Metrics collected up to the point of divergence.
        partial: Vec<crate::learning::EpochMetrics>,
    },
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Build(#[from] BuildError),
}
