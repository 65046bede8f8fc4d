//! Shared harness pieces: truth resolution and deterministic seed
//! derivation for sub-runs.

use crate::CliError;
use crate::config::TruthSource;
use nalgebra::DVector;
use qreforge::families::FamilySpec;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone)]
pub struct ResolvedTruth {
    pub raw: DVector<f64>,
    pub natural: DVector<f64>,
}

/// Resolves ground-truth parameters from a seeded draw or explicit natural
/// values (validated per family).
pub fn resolve_truth(spec: &FamilySpec, source: &TruthSource) -> Result<ResolvedTruth, CliError> {
    let raw = match source {
        TruthSource::Seeded { seed } => {
            let mut rng = ChaCha12Rng::seed_from_u64(*seed);
            spec.draw_truth(&mut rng)
        }
        TruthSource::Explicit { values } => {
            if values.len() != spec.param_dim() {
                return Err(CliError::input(format!(
                    "truth.values has {} entries; family {} needs {}",
                    values.len(),
                    spec.name(),
                    spec.param_dim()
                )));
            }
            let natural = DVector::from_vec(values.clone());
            match spec {
                FamilySpec::Poker { .. } => {
                    if natural.iter().any(|d| *d <= 0.0) || (natural.sum() - 1.0).abs() > 1e-6 {
                        return Err(CliError::input(
                            "poker truth.values must be positive card weights summing to 1",
                        ));
                    }
                }
                FamilySpec::Security { .. } => {
                    if natural.iter().any(|r| *r <= 0.0 || *r >= 2.0) {
                        return Err(CliError::input(
                            "security truth.values must be target values strictly inside (0, 2)",
                        ));
                    }
                }
                FamilySpec::Rps { .. } => {}
            }
            spec.raw_from_natural(&natural)
        }
    };
    let natural = spec.natural_params(&raw);
    Ok(ResolvedTruth { raw, natural })
}

/// Fixed held-out contexts for contextual families; empty otherwise.
pub fn test_context_set(spec: &FamilySpec, count: usize, seed: u64) -> Vec<DVector<f64>> {
    if !spec.is_contextual() {
        return Vec::new();
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| spec.draw_context(&mut rng).expect("contextual family"))
        .collect()
}

/// Deterministic seed derivation for sub-runs (splitmix-style).
pub fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
