//! Game representations: payoff matrices, treeplexes, flow constraints,
//! realization plans, and conversions between them.

mod json;
mod reduced;
mod treeplex;

pub use json::GameFile;
pub use reduced::{DEFAULT_REDUCED_CAP, PureStrategy};
pub use treeplex::{InfoSet, Treeplex};

use crate::error::GameError;
use nalgebra::{DMatrix, DVector};

/// Which side of the game a strategy object belongs to. The row player is
/// the minimizer of `uᵀPv` throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Player {
    Row,
    Col,
}

/// Dense payoff matrix. Entries are the quantity the row player minimizes.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffMatrix {
    matrix: DMatrix<f64>,
}

impl PayoffMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, GameError> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(GameError::DimensionMismatch(
                "payoff matrix must have at least one row and one column".into(),
            ));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(GameError::NonFinitePayoff);
        }
        Ok(Self { matrix })
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

/// Flow constraints `M x = rhs` for one player, derived from a treeplex.
/// Row `i` of the matrix carries `+1` on every action of info set `i` and
/// `-1` on its parent sequence; the right-hand side is 1 for root info sets
/// and 0 otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

/// Nonnegative vector over one player's sequences satisfying the flow
/// constraints; reduces to a simplex point in the normal-form case.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationPlan {
    pub values: DVector<f64>,
    pub owner: Player,
}

impl RealizationPlan {
    pub fn new(values: DVector<f64>, owner: Player) -> Self {
        Self { values, owner }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }

    /// Maximum violation of `M x = rhs` under the given constraints.
    pub fn flow_violation(&self, constraints: &ConstraintSystem) -> f64 {
        let r = &constraints.matrix * &self.values - &constraints.rhs;
        r.amax()
    }
}

/// Two-player zero-sum game in sequence form.
#[derive(Debug, Clone)]
pub struct SequenceFormGame {
    pub payoff: PayoffMatrix,
    pub row_treeplex: Treeplex,
    pub col_treeplex: Treeplex,
    pub row_constraints: ConstraintSystem,
    pub col_constraints: ConstraintSystem,
}

impl SequenceFormGame {
    /// Assembles a game, deriving the flow constraints from the treeplexes,
    /// and validates it.
    pub fn new(
        payoff: PayoffMatrix,
        row_treeplex: Treeplex,
        col_treeplex: Treeplex,
    ) -> Result<Self, GameError> {
        let row_constraints = row_treeplex.constraints();
        let col_constraints = col_treeplex.constraints();
        let game = Self {
            payoff,
            row_treeplex,
            col_treeplex,
            row_constraints,
            col_constraints,
        };
        game.validate()?;
        Ok(game)
    }

    /// Checks every structural invariant: payoff dimensions match the
    /// sequence counts, and the stored constraint systems agree with the
    /// treeplexes entry for entry (including the `{-1, 0, +1}` pattern).
    pub fn validate(&self) -> Result<(), GameError> {
        if self.payoff.rows() != self.row_treeplex.num_sequences()
            || self.payoff.cols() != self.col_treeplex.num_sequences()
        {
            return Err(GameError::DimensionMismatch(format!(
                "payoff is {}x{} but treeplexes have {} and {} sequences",
                self.payoff.rows(),
                self.payoff.cols(),
                self.row_treeplex.num_sequences(),
                self.col_treeplex.num_sequences()
            )));
        }
        validate_constraints(&self.row_constraints, &self.row_treeplex, "E")?;
        validate_constraints(&self.col_constraints, &self.col_treeplex, "F")?;
        Ok(())
    }

    pub fn expected_payoff(
        &self,
        u: &RealizationPlan,
        v: &RealizationPlan,
    ) -> Result<f64, GameError> {
        bilinear_payoff(&self.payoff, u, v)
    }

    /// Enumerates the player's reduced pure strategies; fails with
    /// [`GameError::TooLarge`] beyond `cap`.
    pub fn reduced_normal_form(
        &self,
        player: Player,
        cap: usize,
    ) -> Result<Vec<PureStrategy>, GameError> {
        let tp = match player {
            Player::Row => &self.row_treeplex,
            Player::Col => &self.col_treeplex,
        };
        reduced::reduced_normal_form(tp, player, cap)
    }
}

/// Two-player zero-sum game in normal form: a bare payoff matrix.
#[derive(Debug, Clone)]
pub struct NormalFormGame {
    pub payoff: PayoffMatrix,
}

impl NormalFormGame {
    pub fn new(payoff: PayoffMatrix) -> Self {
        Self { payoff }
    }

    pub fn expected_payoff(
        &self,
        u: &RealizationPlan,
        v: &RealizationPlan,
    ) -> Result<f64, GameError> {
        bilinear_payoff(&self.payoff, u, v)
    }

    /// Wraps the game as a one-info-set-per-player sequence-form game.
    pub fn to_sequence_form(&self) -> SequenceFormGame {
        let row = Treeplex::single_info_set(self.payoff.rows());
        let col = Treeplex::single_info_set(self.payoff.cols());
        SequenceFormGame::new(self.payoff.clone(), row, col)
            .expect("simplex wrapping of a valid payoff matrix cannot fail")
    }
}

fn bilinear_payoff(
    payoff: &PayoffMatrix,
    u: &RealizationPlan,
    v: &RealizationPlan,
) -> Result<f64, GameError> {
    if u.len() != payoff.rows() || v.len() != payoff.cols() {
        return Err(GameError::DimensionMismatch(format!(
            "plans of length {} and {} against a {}x{} payoff",
            u.len(),
            v.len(),
            payoff.rows(),
            payoff.cols()
        )));
    }
    Ok((u.values.transpose() * payoff.matrix() * &v.values)[(0, 0)])
}

fn validate_constraints(
    stored: &ConstraintSystem,
    tp: &Treeplex,
    name: &str,
) -> Result<(), GameError> {
    let derived = tp.constraints();
    if stored.matrix.shape() != derived.matrix.shape() || stored.rhs.len() != derived.rhs.len() {
        return Err(GameError::DimensionMismatch(format!(
            "{name} is {:?} but the treeplex implies {:?}",
            stored.matrix.shape(),
            derived.matrix.shape()
        )));
    }
    for entry in stored.matrix.iter() {
        if *entry != 0.0 && *entry != 1.0 && *entry != -1.0 {
            return Err(GameError::BrokenFlowStructure(format!(
                "{name} contains the entry {entry}, outside {{-1, 0, 1}}"
            )));
        }
    }
    if stored.matrix != derived.matrix {
        return Err(GameError::BrokenFlowStructure(format!(
            "{name} disagrees with the flow pattern implied by the treeplex"
        )));
    }
    if stored.rhs != derived.rhs {
        return Err(GameError::BrokenFlowStructure(format!(
            "right-hand side of {name} disagrees with the treeplex root structure"
        )));
    }
    Ok(())
}

/// Per-action conditional probabilities `σ_a = plan_a / plan_parent`.
/// Unreachable info sets (zero parent mass) get uniform conditionals; only
/// sampling ever sees those, since equilibria are strictly interior.
pub fn behavioral_from_realization(plan: &RealizationPlan, tp: &Treeplex) -> DVector<f64> {
    let mut sigma = DVector::zeros(tp.num_sequences());
    for set in tp.info_sets() {
        let parent_value = match set.parent {
            Some(p) => plan.values[p],
            None => 1.0,
        };
        if parent_value > 0.0 {
            for &a in &set.actions {
                sigma[a] = plan.values[a] / parent_value;
            }
        } else {
            let w = 1.0 / set.actions.len() as f64;
            for &a in &set.actions {
                sigma[a] = w;
            }
        }
    }
    sigma
}

/// Top-down product `plan_a = σ_a · plan_parent`; the result satisfies the
/// flow constraints exactly.
pub fn realization_from_behavioral(
    sigma: &DVector<f64>,
    tp: &Treeplex,
    owner: Player,
) -> Result<RealizationPlan, GameError> {
    if let Some(a) = sigma.iter().position(|x| *x < 0.0) {
        return Err(GameError::NegativeProbability { action: a });
    }
    let mut values = DVector::zeros(tp.num_sequences());
    for &i in tp.topological_order() {
        let set = &tp.info_sets()[i];
        let parent_value = match set.parent {
            Some(p) => values[p],
            None => 1.0,
        };
        for &a in &set.actions {
            values[a] = sigma[a] * parent_value;
        }
    }
    Ok(RealizationPlan::new(values, owner))
}

/// The realization plan of uniform conditionals; strictly positive, used to
/// initialize the solvers.
pub fn uniform_realization_plan(tp: &Treeplex, owner: Player) -> RealizationPlan {
    let mut sigma = DVector::zeros(tp.num_sequences());
    for set in tp.info_sets() {
        let w = 1.0 / set.actions.len() as f64;
        for &a in &set.actions {
            sigma[a] = w;
        }
    }
    realization_from_behavioral(&sigma, tp, owner).expect("uniform conditionals are nonnegative")
}
