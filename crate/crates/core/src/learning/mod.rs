//! Learning game parameters from observed play: sequence log-loss, its
//! exact gradients through the equilibrium, and the training loop.

mod optimizer;
mod sample;
mod train;

pub use optimizer::{OptMethod, OptimizerConfig, OptimizerState};
pub use sample::{generate_dataset, sample_play};
pub use train::{TrainOptions, TrainOutcome, TrainingData, Truth, train};

use crate::error::{SolveError, TrainError};
use crate::families::{BuiltGame, ChanceDraw, FamilySpec, terminal_distribution};
use crate::game::{Player, RealizationPlan};
use crate::qre_normal::{self, NormalBackward, SolverOptions};
use crate::qre_sequence::{self, SequenceBackward};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Which players' actions are observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationMask {
    Row,
    Col,
    Both,
}

impl ObservationMask {
    pub fn covers_row(self) -> bool {
        matches!(self, ObservationMask::Row | ObservationMask::Both)
    }

    pub fn covers_col(self) -> bool {
        matches!(self, ObservationMask::Col | ObservationMask::Both)
    }
}

/// One sampled play. Observed indices are the deepest sequence the player
/// actually executed; chance draws are recorded for dataset realism but
/// never enter the loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub context: Option<Vec<f64>>,
    pub mask: ObservationMask,
    pub row_obs: Option<usize>,
    pub col_obs: Option<usize>,
    pub chance: Option<ChanceDraw>,
}

/// A loss value with its gradients in strategy space.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub grad_u: DVector<f64>,
    pub grad_v: DVector<f64>,
}

/// A solved game with the KKT factorization cached for backward passes.
pub struct Forward {
    pub u: RealizationPlan,
    pub v: RealizationPlan,
    pub residual: f64,
    pub iterations: usize,
    backward: BackwardCache,
}

enum BackwardCache {
    Normal(NormalBackward),
    Sequence(SequenceBackward),
}

/// Solves a built game, routing single-info-set games through the
/// normal-form solver.
pub fn solve_built(built: &BuiltGame, opts: &SolverOptions) -> Result<Forward, SolveError> {
    if built.is_normal_shaped() {
        let sol = qre_normal::solve_normal(&built.game.payoff, opts)?;
        let backward = NormalBackward::new(&built.game.payoff, &sol.u, &sol.v);
        Ok(Forward {
            u: RealizationPlan::new(sol.u, Player::Row),
            v: RealizationPlan::new(sol.v, Player::Col),
            residual: sol.residual,
            iterations: sol.iterations,
            backward: BackwardCache::Normal(backward),
        })
    } else {
        let sol = qre_sequence::solve_sequence(&built.game, opts)?;
        let backward = SequenceBackward::new(&built.game, &sol.u, &sol.v);
        Ok(Forward {
            u: sol.u,
            v: sol.v,
            residual: sol.residual,
            iterations: sol.iterations,
            backward: BackwardCache::Sequence(backward),
        })
    }
}

impl Forward {
    /// Backpropagates upstream strategy gradients to the payoff matrix,
    /// reusing the cached factorization.
    pub fn grad_payoff(
        &self,
        grad_u: &DVector<f64>,
        grad_v: &DVector<f64>,
    ) -> Result<DMatrix<f64>, SolveError> {
        match &self.backward {
            BackwardCache::Normal(b) => b.grad_payoff(grad_u, grad_v),
            BackwardCache::Sequence(b) => b.grad_payoff(grad_u, grad_v),
        }
    }
}

/// Negative log-likelihood of one record under the model plans. The
/// realization-plan entry is itself the sequence likelihood, so the loss is
/// `-log u[row_obs] - log v[col_obs]` restricted to the observed players.
pub fn log_loss(
    u: &RealizationPlan,
    v: &RealizationPlan,
    record: &ObservationRecord,
) -> Result<LossGrad, TrainError> {
    let mut loss = 0.0;
    let mut grad_u = DVector::zeros(u.len());
    let mut grad_v = DVector::zeros(v.len());
    if record.mask.covers_row() {
        let a = record.row_obs.ok_or_else(|| {
            TrainError::ShapeMismatch("record mask covers row but row_obs is missing".into())
        })?;
        if a >= u.len() {
            return Err(TrainError::ShapeMismatch(format!(
                "row_obs {a} out of range for {} sequences",
                u.len()
            )));
        }
        loss -= u.values[a].ln();
        grad_u[a] -= 1.0 / u.values[a];
    }
    if record.mask.covers_col() {
        let a = record.col_obs.ok_or_else(|| {
            TrainError::ShapeMismatch("record mask covers col but col_obs is missing".into())
        })?;
        if a >= v.len() {
            return Err(TrainError::ShapeMismatch(format!(
                "col_obs {a} out of range for {} sequences",
                v.len()
            )));
        }
        loss -= v.values[a].ln();
        grad_v[a] -= 1.0 / v.values[a];
    }
    Ok(LossGrad {
        loss,
        grad_u,
        grad_v,
    })
}

/// Infinite-data limit of the sampled log-loss: the cross-entropy between
/// the truth's distribution over deepest sequences (chance and both truth
/// strategies included) and the model's plan entries.
pub fn expected_log_loss(
    model_u: &RealizationPlan,
    model_v: &RealizationPlan,
    truth_built: &BuiltGame,
    truth_u: &RealizationPlan,
    truth_v: &RealizationPlan,
    mask: ObservationMask,
) -> Result<LossGrad, TrainError> {
    if model_u.len() != truth_u.len() || model_v.len() != truth_v.len() {
        return Err(TrainError::ShapeMismatch(
            "model and truth plans have different lengths".into(),
        ));
    }
    let (p_row, p_col) = terminal_distribution(truth_built, truth_u, truth_v);
    let mut loss = 0.0;
    let mut grad_u = DVector::zeros(model_u.len());
    let mut grad_v = DVector::zeros(model_v.len());
    if mask.covers_row() {
        for a in 0..p_row.len() {
            if p_row[a] > 0.0 {
                loss -= p_row[a] * model_u.values[a].ln();
                grad_u[a] = -p_row[a] / model_u.values[a];
            }
        }
    }
    if mask.covers_col() {
        for a in 0..p_col.len() {
            if p_col[a] > 0.0 {
                loss -= p_col[a] * model_v.values[a].ln();
                grad_v[a] = -p_col[a] / model_v.values[a];
            }
        }
    }
    Ok(LossGrad {
        loss,
        grad_u,
        grad_v,
    })
}

/// Per-epoch training metrics, one CSV row each.
#[derive(Debug, Clone, Copy)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub param_mse: f64,
    pub strategy_mse: f64,
}

/// Parameter and strategy recovery metrics against ground truth.
#[derive(Debug, Clone, Copy)]
pub struct EvalMetrics {
    pub param_mse: f64,
    pub strategy_mse: f64,
}

/// Mean squared error between the model's and truth's natural parameters,
/// and between their equilibrium plans (u and v concatenated), averaged
/// over the given test contexts (one untexted game when the family is not
/// contextual).
pub fn evaluate(
    spec: &FamilySpec,
    raw_params: &DVector<f64>,
    truth_raw: &DVector<f64>,
    test_contexts: &[DVector<f64>],
    opts: &SolverOptions,
) -> Result<EvalMetrics, TrainError> {
    let model_nat = spec.natural_params(raw_params);
    let truth_nat = spec.natural_params(truth_raw);
    if model_nat.len() != truth_nat.len() {
        return Err(TrainError::ShapeMismatch(
            "model and truth parameter lengths differ".into(),
        ));
    }
    let param_mse = (&model_nat - &truth_nat).norm_squared() / model_nat.len() as f64;

    let contexts: Vec<Option<&DVector<f64>>> = if spec.is_contextual() {
        test_contexts.iter().map(Some).collect()
    } else {
        vec![None]
    };
    let mut strategy_mse = 0.0;
    for ctx in &contexts {
        let model_fwd = solve_context(spec, raw_params, *ctx, opts)?;
        let truth_fwd = solve_context(spec, truth_raw, *ctx, opts)?;
        strategy_mse += plan_mse(&model_fwd, &truth_fwd);
    }
    Ok(EvalMetrics {
        param_mse,
        strategy_mse: strategy_mse / contexts.len() as f64,
    })
}

pub(crate) fn solve_context(
    spec: &FamilySpec,
    raw: &DVector<f64>,
    context: Option<&DVector<f64>>,
    opts: &SolverOptions,
) -> Result<Forward, TrainError> {
    let built = spec.build(raw, context)?;
    solve_built(&built, opts).map_err(|source| TrainError::SolverFailure { batch: 0, source })
}

pub(crate) fn plan_mse(a: &Forward, b: &Forward) -> f64 {
    let du = (&a.u.values - &b.u.values).norm_squared();
    let dv = (&a.v.values - &b.v.values).norm_squared();
    (du + dv) / (a.u.len() + a.v.len()) as f64
}
