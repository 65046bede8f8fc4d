//! `qreforge train`: learn family parameters from a dataset, writing
//! per-epoch metrics and the final parameters.

use crate::config::{ExperimentConfig, Objective, TruthSource};
use crate::experiments::{mix_seed, resolve_truth, test_context_set};
use crate::output::{Manifest, ensure_dir, read_records, write_metrics_csv, write_params_json};
use crate::{CliError, progress};
use nalgebra::DVector;
use qreforge::TrainError;
use qreforge::learning::{TrainOptions, TrainingData, Truth, train};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::path::Path;

pub fn run(
    config: &Path,
    data: &Path,
    manifest: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| CliError::input(format!("reading {}: {e}", config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(s) = seed {
        cfg.override_seed(s);
    }
    ensure_dir(out)?;

    let records = read_records(data)?;
    let truth_raw = locate_truth(&cfg, data, manifest)?;
    let truth = truth_raw.as_ref().map(|raw| Truth {
        raw_params: raw.clone(),
        test_contexts: test_context_set(&cfg.family, cfg.train.test_contexts, cfg.train.test_seed),
        mask: cfg.data.mask,
    });

    let training_data = match cfg.train.objective {
        Objective::Sampled => TrainingData::Records(records),
        Objective::Noiseless => {
            if truth.is_none() {
                return Err(CliError::input(
                    "noiseless objective needs ground truth (a manifest or explicit truth values)",
                ));
            }
            let contexts = if cfg.family.is_contextual() {
                let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(cfg.train.seed, 77));
                (0..cfg.train.noiseless_contexts)
                    .map(|_| cfg.family.draw_context(&mut rng))
                    .collect()
            } else {
                vec![None]
            };
            TrainingData::Noiseless {
                mask: cfg.data.mask,
                contexts,
            }
        }
    };

    let init = DVector::zeros(cfg.family.param_dim());
    progress!(
        "training {} for {} epochs on {}",
        cfg.family.name(),
        cfg.optimizer.epochs,
        data.display()
    );
    let options = TrainOptions {
        optimizer: cfg.optimizer.clone(),
        solver: cfg.solver.to_options(),
        seed: cfg.train.seed,
        eval_every: cfg.train.eval_every,
    };
    match train(&cfg.family, &init, &training_data, truth.as_ref(), &options) {
        Ok(outcome) => {
            write_metrics_csv(&out.join("metrics.csv"), &outcome.metrics)?;
            write_params_json(&out.join("params.json"), &cfg.family, &outcome.params)?;
            Ok(())
        }
        Err(TrainError::DivergenceDetected { epoch, partial }) => {
            // Keep the partial metrics around for inspection.
            write_metrics_csv(&out.join("metrics.csv"), &partial)?;
            Err(CliError::numerical(format!(
                "DivergenceDetected at epoch {epoch}; partial metrics retained"
            )))
        }
        Err(e @ TrainError::SolverFailure { .. }) => Err(CliError::numerical(e.to_string())),
        Err(e) => Err(CliError::input(e.to_string())),
    }
}

/// Truth lookup order: explicit config values, then --manifest, then a
/// manifest.json sitting next to the dataset.
fn locate_truth(
    cfg: &ExperimentConfig,
    data: &Path,
    manifest: Option<&Path>,
) -> Result<Option<DVector<f64>>, CliError> {
    if let TruthSource::Explicit { .. } = &cfg.truth {
        return Ok(Some(resolve_truth(&cfg.family, &cfg.truth)?.raw));
    }
    let manifest_path = match manifest {
        Some(p) => Some(p.to_path_buf()),
        None => {
            let sibling = data
                .parent()
                .unwrap_or(Path::new("."))
                .join("manifest.json");
            sibling.exists().then_some(sibling)
        }
    };
    match manifest_path {
        Some(path) => {
            let m = Manifest::read(&path)?;
            if m.family != cfg.family {
                return Err(CliError::input(format!(
                    "manifest family {:?} does not match config family {:?}",
                    m.family, cfg.family
                )));
            }
            Ok(Some(DVector::from_vec(m.truth_raw)))
        }
        None => Ok(None),
    }
}
