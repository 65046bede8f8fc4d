//! Sampling observed play from ground-truth equilibria.

use crate::error::TrainError;
use crate::families::{BuiltGame, FamilySpec, sample_playout};
use crate::game::RealizationPlan;
use crate::learning::{ObservationMask, ObservationRecord, solve_built};
use crate::qre_normal::SolverOptions;
use rand::Rng;

/// Samples one play from the given equilibrium plans: chance first where
/// the family has it, then both players' behavioral strategies down the
/// tree. The deepest sequence per observed player is recorded. Seeded runs
/// are reproducible.
///
/// The caller owns the `context` field (the game is already built here).
pub fn sample_play<R: Rng>(
    built: &BuiltGame,
    u: &RealizationPlan,
    v: &RealizationPlan,
    mask: ObservationMask,
    rng: &mut R,
) -> ObservationRecord {
    let playout = sample_playout(built, u, v, rng);
    ObservationRecord {
        context: None,
        mask,
        row_obs: mask.covers_row().then_some(playout.row_seq),
        col_obs: mask.covers_col().then_some(playout.col_seq),
        chance: playout.chance,
    }
}

/// Draws `size` observation records from the truth equilibrium of the
/// family. Contextual families draw a fresh context per record and solve
/// under it; context-free families solve once.
pub fn generate_dataset<R: Rng>(
    spec: &FamilySpec,
    truth_raw: &nalgebra::DVector<f64>,
    size: usize,
    mask: ObservationMask,
    opts: &SolverOptions,
    rng: &mut R,
) -> Result<Vec<ObservationRecord>, TrainError> {
    let solve = |built: &BuiltGame| {
        solve_built(built, opts).map_err(|source| TrainError::SolverFailure { batch: 0, source })
    };
    let mut records = Vec::with_capacity(size);
    if spec.is_contextual() {
        for _ in 0..size {
            let context = spec.draw_context(rng).expect("contextual family");
            let built = spec.build(truth_raw, Some(&context))?;
            let fwd = solve(&built)?;
            let mut record = sample_play(&built, &fwd.u, &fwd.v, mask, rng);
            record.context = Some(context.iter().copied().collect());
            records.push(record);
        }
    } else {
        let built = spec.build(truth_raw, None)?;
        let fwd = solve(&built)?;
        for _ in 0..size {
            records.push(sample_play(&built, &fwd.u, &fwd.v, mask, rng));
        }
    }
    Ok(records)
}
