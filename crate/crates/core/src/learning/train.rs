//! The end-to-end training loop: build games from the current parameters,
//! solve forward, backpropagate the log-loss through the KKT system and the
//! family's parameter map, and apply the optimizer.

use crate::error::TrainError;
use crate::families::FamilySpec;
use crate::learning::{
    EpochMetrics, Forward, ObservationMask, ObservationRecord, OptimizerConfig, OptimizerState,
    expected_log_loss, log_loss, plan_mse, solve_built, solve_context,
};
use crate::qre_normal::SolverOptions;
use nalgebra::DVector;
use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha12Rng;
use std::collections::HashMap;

const DIVERGENCE_FACTOR: f64 = 10.0;
const DIVERGENCE_PATIENCE: usize = 50;

/// Flags a run whose loss exceeds ten times its initial value for fifty
/// consecutive epochs.
#[derive(Debug, Default)]
pub(crate) struct DivergenceMonitor {
    baseline: Option<f64>,
    streak: usize,
}

impl DivergenceMonitor {
    /// Feeds one epoch's training loss; returns true when the run has
    /// officially diverged.
    pub(crate) fn observe(&mut self, loss: f64) -> bool {
        let baseline = *self.baseline.get_or_insert(loss);
        if baseline.is_finite() && loss > DIVERGENCE_FACTOR * baseline.max(1e-12) {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.streak >= DIVERGENCE_PATIENCE
    }
}

/// What the training loop minimizes.
pub enum TrainingData {
    /// Sampled observation records; the empirical mean log-loss.
    Records(Vec<ObservationRecord>),
    /// The noiseless cross-entropy against the truth equilibrium, evaluated
    /// at the given contexts (use `vec![None]` for context-free families).
    /// Requires `Truth`.
    Noiseless {
        mask: ObservationMask,
        contexts: Vec<Option<DVector<f64>>>,
    },
}

/// Ground truth, used for the noiseless objective and for metrics.
pub struct Truth {
    pub raw_params: DVector<f64>,
    /// Evaluation contexts for contextual families; ignored otherwise.
    pub test_contexts: Vec<DVector<f64>>,
    /// Which players the test loss scores.
    pub mask: ObservationMask,
}

pub struct TrainOptions {
    pub optimizer: OptimizerConfig,
    pub solver: SolverOptions,
    pub seed: u64,
    /// Compute test metrics every this many epochs (they are carried
    /// forward in between); the final epoch is always evaluated.
    pub eval_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            solver: SolverOptions::default(),
            seed: 0,
            eval_every: 1,
        }
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: DVector<f64>,
    pub metrics: Vec<EpochMetrics>,
}

/// A context with its solved truth game, reused across epochs.
type SolvedTarget = (Option<DVector<f64>>, crate::families::BuiltGame, Forward);

struct TruthCache {
    /// One solved truth game per evaluation context.
    test: Vec<SolvedTarget>,
    natural: DVector<f64>,
    mask: ObservationMask,
}

/// Runs the training loop; deterministic for a fixed seed.
pub fn train(
    spec: &FamilySpec,
    init_params: &DVector<f64>,
    data: &TrainingData,
    truth: Option<&Truth>,
    opts: &TrainOptions,
) -> Result<TrainOutcome, TrainError> {
    if init_params.len() != spec.param_dim() {
        return Err(TrainError::ShapeMismatch(format!(
            "{} initial parameters for family {} (expected {})",
            init_params.len(),
            spec.name(),
            spec.param_dim()
        )));
    }
    let epochs = opts.optimizer.epochs;
    let mut params = init_params.clone();
    let mut state = OptimizerState::new(params.len());
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);

    // Truth games never change; solve them once.
    let truth_cache = truth
        .map(|t| -> Result<TruthCache, TrainError> {
            let contexts: Vec<Option<DVector<f64>>> = if spec.is_contextual() {
                t.test_contexts.iter().cloned().map(Some).collect()
            } else {
                vec![None]
            };
            let mut test = Vec::with_capacity(contexts.len());
            for ctx in contexts {
                let built = spec.build(&t.raw_params, ctx.as_ref())?;
                let fwd = solve_built(&built, &opts.solver)
                    .map_err(|source| TrainError::SolverFailure { batch: 0, source })?;
                test.push((ctx, built, fwd));
            }
            Ok(TruthCache {
                test,
                natural: spec.natural_params(&t.raw_params),
                mask: t.mask,
            })
        })
        .transpose()?;

    // Noiseless training also needs truth solves at the training contexts.
    let noiseless_targets = match data {
        TrainingData::Noiseless { contexts, .. } => {
            let t = truth.ok_or_else(|| {
                TrainError::ShapeMismatch("noiseless training requires ground truth".into())
            })?;
            let mut targets = Vec::with_capacity(contexts.len());
            for ctx in contexts {
                let built = spec.build(&t.raw_params, ctx.as_ref())?;
                let fwd = solve_built(&built, &opts.solver)
                    .map_err(|source| TrainError::SolverFailure { batch: 0, source })?;
                targets.push((ctx.clone(), built, fwd));
            }
            Some(targets)
        }
        TrainingData::Records(_) => None,
    };

    let mut metrics = Vec::with_capacity(epochs.max(1));
    let mut last_eval: Option<(f64, f64, f64)> = None;
    let mut monitor = DivergenceMonitor::default();

    let eval = |epoch: usize,
                train_loss: f64,
                params: &DVector<f64>,
                force: bool,
                last: &mut Option<(f64, f64, f64)>|
     -> Result<EpochMetrics, TrainError> {
        let due = force || last.is_none() || epoch.is_multiple_of(opts.eval_every.max(1));
        if due {
            let fresh = match &truth_cache {
                Some(cache) => test_metrics(spec, params, cache, &opts.solver)?,
                None => (f64::NAN, f64::NAN, f64::NAN),
            };
            *last = Some(fresh);
        }
        let (test_loss, param_mse, strategy_mse) = last.unwrap();
        Ok(EpochMetrics {
            epoch,
            train_loss,
            test_loss,
            param_mse,
            strategy_mse,
        })
    };

    if epochs == 0 {
        let initial = initial_train_loss(spec, &params, data, &noiseless_targets, opts)?;
        metrics.push(eval(0, initial, &params, true, &mut last_eval)?);
        return Ok(TrainOutcome { params, metrics });
    }

    for epoch in 1..=epochs {
        let train_loss = match data {
            TrainingData::Records(records) => run_record_epoch(
                spec,
                &mut params,
                &mut state,
                records,
                &opts.optimizer,
                &opts.solver,
                &mut rng,
            )?,
            TrainingData::Noiseless { mask, .. } => run_noiseless_epoch(
                spec,
                &mut params,
                &mut state,
                noiseless_targets.as_ref().expect("prepared above"),
                *mask,
                &opts.optimizer,
                &opts.solver,
            )?,
        };

        metrics.push(eval(
            epoch,
            train_loss,
            &params,
            epoch == epochs,
            &mut last_eval,
        )?);

        if monitor.observe(train_loss) {
            return Err(TrainError::DivergenceDetected {
                epoch,
                partial: metrics,
            });
        }
    }

    Ok(TrainOutcome { params, metrics })
}

/// Groups records by context so each unique game is solved once per batch;
/// the KKT factorization from the forward solve is then reused for the
/// single backward solve of the batch-summed gradient.
fn run_record_epoch(
    spec: &FamilySpec,
    params: &mut DVector<f64>,
    state: &mut OptimizerState,
    records: &[ObservationRecord],
    optimizer: &OptimizerConfig,
    solver: &SolverOptions,
    rng: &mut ChaCha12Rng,
) -> Result<f64, TrainError> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(rng);
    let batch_size = optimizer.batch_size.max(1);

    let mut epoch_loss = 0.0;
    for (batch_index, batch) in order.chunks(batch_size).enumerate() {
        let mut groups: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
        for &r in batch {
            let key: Vec<u64> = records[r]
                .context
                .as_deref()
                .unwrap_or(&[])
                .iter()
                .map(|x| x.to_bits())
                .collect();
            groups.entry(key).or_default().push(r);
        }
        // Deterministic group order regardless of hash iteration.
        let mut groups: Vec<_> = groups.into_values().collect();
        groups.sort_by_key(|g| g[0]);

        let mut grad_theta = DVector::zeros(params.len());
        for group in groups {
            let context = records[group[0]]
                .context
                .as_ref()
                .map(|c| DVector::from_iterator(c.len(), c.iter().copied()));
            let built = spec.build(params, context.as_ref())?;
            let fwd = solve_built(&built, solver).map_err(|source| TrainError::SolverFailure {
                batch: batch_index,
                source,
            })?;
            let mut grad_u = DVector::zeros(fwd.u.len());
            let mut grad_v = DVector::zeros(fwd.v.len());
            for &r in &group {
                let lg = log_loss(&fwd.u, &fwd.v, &records[r])?;
                epoch_loss += lg.loss;
                grad_u += lg.grad_u;
                grad_v += lg.grad_v;
            }
            // Mean over the batch, so the step size is batch-size free.
            grad_u /= batch.len() as f64;
            grad_v /= batch.len() as f64;
            let grad_p =
                fwd.grad_payoff(&grad_u, &grad_v)
                    .map_err(|source| TrainError::SolverFailure {
                        batch: batch_index,
                        source,
                    })?;
            grad_theta += spec.payoff_vjp(params, context.as_ref(), &grad_p)?;
        }
        state.step(optimizer, params, &grad_theta);
    }
    Ok(epoch_loss / records.len().max(1) as f64)
}

fn run_noiseless_epoch(
    spec: &FamilySpec,
    params: &mut DVector<f64>,
    state: &mut OptimizerState,
    targets: &[SolvedTarget],
    mask: ObservationMask,
    optimizer: &OptimizerConfig,
    solver: &SolverOptions,
) -> Result<f64, TrainError> {
    let mut total_loss = 0.0;
    let mut grad_theta = DVector::zeros(params.len());
    let weight = 1.0 / targets.len() as f64;
    for (batch_index, (ctx, truth_built, truth_fwd)) in targets.iter().enumerate() {
        let built = spec.build(params, ctx.as_ref())?;
        let fwd = solve_built(&built, solver).map_err(|source| TrainError::SolverFailure {
            batch: batch_index,
            source,
        })?;
        let lg = expected_log_loss(
            &fwd.u,
            &fwd.v,
            truth_built,
            &truth_fwd.u,
            &truth_fwd.v,
            mask,
        )?;
        total_loss += lg.loss;
        let grad_p = fwd
            .grad_payoff(&(weight * lg.grad_u), &(weight * lg.grad_v))
            .map_err(|source| TrainError::SolverFailure {
                batch: batch_index,
                source,
            })?;
        grad_theta += spec.payoff_vjp(params, ctx.as_ref(), &grad_p)?;
    }
    state.step(optimizer, params, &grad_theta);
    Ok(total_loss * weight)
}

fn initial_train_loss(
    spec: &FamilySpec,
    params: &DVector<f64>,
    data: &TrainingData,
    noiseless_targets: &Option<Vec<SolvedTarget>>,
    opts: &TrainOptions,
) -> Result<f64, TrainError> {
    match data {
        TrainingData::Records(records) => {
            let mut loss = 0.0;
            let mut cache: HashMap<Vec<u64>, Forward> = HashMap::new();
            for record in records {
                let key: Vec<u64> = record
                    .context
                    .as_deref()
                    .unwrap_or(&[])
                    .iter()
                    .map(|x| x.to_bits())
                    .collect();
                if !cache.contains_key(&key) {
                    let context = record
                        .context
                        .as_ref()
                        .map(|c| DVector::from_iterator(c.len(), c.iter().copied()));
                    let fwd = solve_context(spec, params, context.as_ref(), &opts.solver)?;
                    cache.insert(key.clone(), fwd);
                }
                let fwd = &cache[&key];
                loss += log_loss(&fwd.u, &fwd.v, record)?.loss;
            }
            Ok(loss / records.len().max(1) as f64)
        }
        TrainingData::Noiseless { mask, .. } => {
            let targets = noiseless_targets.as_ref().expect("prepared above");
            let mut loss = 0.0;
            for (ctx, truth_built, truth_fwd) in targets {
                let fwd = solve_context(spec, params, ctx.as_ref(), &opts.solver)?;
                loss += expected_log_loss(
                    &fwd.u,
                    &fwd.v,
                    truth_built,
                    &truth_fwd.u,
                    &truth_fwd.v,
                    *mask,
                )?
                .loss;
            }
            Ok(loss / targets.len() as f64)
        }
    }
}

/// `(test_loss, param_mse, strategy_mse)` at the current parameters.
fn test_metrics(
    spec: &FamilySpec,
    params: &DVector<f64>,
    cache: &TruthCache,
    solver: &SolverOptions,
) -> Result<(f64, f64, f64), TrainError> {
    let natural = spec.natural_params(params);
    let param_mse = (&natural - &cache.natural).norm_squared() / natural.len() as f64;
    let mut test_loss = 0.0;
    let mut strategy_mse = 0.0;
    for (ctx, truth_built, truth_fwd) in &cache.test {
        let fwd = solve_context(spec, params, ctx.as_ref(), solver)?;
        test_loss += expected_log_loss(
            &fwd.u,
            &fwd.v,
            truth_built,
            &truth_fwd.u,
            &truth_fwd.v,
            cache.mask,
        )?
        .loss;
        strategy_mse += plan_mse(&fwd, truth_fwd);
    }
    let k = cache.test.len().max(1) as f64;
    Ok((test_loss / k, param_mse, strategy_mse / k))
}
