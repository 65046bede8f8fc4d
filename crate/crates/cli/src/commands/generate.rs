//! `qreforge generate`: sample observation datasets from the ground-truth
//! equilibrium, one JSONL file per requested size, plus a manifest.

use crate::config::ExperimentConfig;
use crate::experiments::{mix_seed, resolve_truth};
use crate::output::{Manifest, dataset_filename, ensure_dir, write_records};
use crate::{CliError, progress};
use qreforge::learning::generate_dataset;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::path::Path;

pub fn run(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| CliError::input(format!("reading {}: {e}", config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(s) = seed {
        cfg.override_seed(s);
    }
    ensure_dir(out)?;

    let truth = resolve_truth(&cfg.family, &cfg.truth)?;
    let solver = cfg.solver.to_options();
    for (index, &size) in cfg.data.sizes.iter().enumerate() {
        let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(cfg.data.seed, index as u64));
        let records = generate_dataset(
            &cfg.family,
            &truth.raw,
            size,
            cfg.data.mask,
            &solver,
            &mut rng,
        )
        .map_err(|e| CliError::numerical(e.to_string()))?;
        let path = out.join(dataset_filename(&cfg.family, size));
        write_records(&path, &records)?;
        progress!("wrote {} records to {}", records.len(), path.display());
    }

    Manifest {
        family: cfg.family.clone(),
        mask: cfg.data.mask,
        sizes: cfg.data.sizes.clone(),
        truth_raw: truth.raw.iter().copied().collect(),
        truth_natural: truth.natural.iter().copied().collect(),
        data_seed: cfg.data.seed,
    }
    .write(&out.join("manifest.json"))
}
