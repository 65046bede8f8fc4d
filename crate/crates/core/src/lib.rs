//! Differentiable logit quantal response equilibrium (QRE) solvers for
//! two-player zero-sum games.
//!
//! The crate solves the entropy-regularized saddle point of a zero-sum game
//! with a primal-dual Newton method, in both normal form ([`qre_normal`]) and
//! sequence form over treeplexes ([`qre_sequence`]). Because the equilibrium
//! is a smooth function of the payoff matrix, losses on the equilibrium
//! strategies can be backpropagated analytically through the KKT system to
//! the payoff matrix and further to low-dimensional game parameters
//! ([`families`]), which is what [`learning`] uses to recover unknown game
//! parameters from observed play.
//!
//! Conventions used throughout:
//!
//! * the row player **minimizes** `uᵀPv`, the column player maximizes;
//! * the rationality parameter of the logit response is fixed at 1;
//! * strategies are realization plans over sequences (a probability simplex
//!   in the normal-form case).

pub mod error;
pub mod families;
pub mod game;
pub mod learning;
pub mod qre_normal;
pub mod qre_sequence;

mod numeric;

pub use error::{BuildError, GameError, SolveError, TrainError};
pub use game::{
    ConstraintSystem, NormalFormGame, PayoffMatrix, Player, RealizationPlan, SequenceFormGame,
    Treeplex,
};
pub use qre_normal::{QreSolution, SolverOptions};
pub use qre_sequence::SeqQreSolution;
