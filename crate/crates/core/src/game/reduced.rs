//! Reduced normal form enumeration, used as the equivalence oracle for the
//! sequence-form solver on small games.

use crate::error::GameError;
use crate::game::{Player, RealizationPlan, Treeplex};
use nalgebra::DVector;

/// Default ceiling on the number of reduced pure strategies to enumerate.
pub const DEFAULT_REDUCED_CAP: usize = 4096;

/// A reduced pure strategy: one action per info set reachable under the
/// player's own earlier choices, plus the 0/1 realization plan it induces.
#[derive(Debug, Clone)]
pub struct PureStrategy {
    /// `(info set, chosen sequence)` pairs, in the order choices were made.
    pub choices: Vec<(usize, usize)>,
    pub plan: RealizationPlan,
}

/// Enumerates reduced pure strategies. Info sets not reachable under the
/// player's own prior choices carry no choice, so duplicates of the full
/// normal form are never produced.
pub fn reduced_normal_form(
    tp: &Treeplex,
    owner: Player,
    cap: usize,
) -> Result<Vec<PureStrategy>, GameError> {
    let roots: Vec<usize> = (0..tp.num_info_sets())
        .filter(|&i| tp.info_sets()[i].parent.is_none())
        .collect();
    let mut out = Vec::new();
    let mut choices = Vec::new();
    enumerate(tp, owner, roots, &mut choices, &mut out, cap)?;
    Ok(out)
}

fn enumerate(
    tp: &Treeplex,
    owner: Player,
    frontier: Vec<usize>,
    choices: &mut Vec<(usize, usize)>,
    out: &mut Vec<PureStrategy>,
    cap: usize,
) -> Result<(), GameError> {
    let Some((&set, rest)) = frontier.split_first() else {
        if out.len() >= cap {
            return Err(GameError::TooLarge { cap });
        }
        out.push(materialize(tp, owner, choices));
        return Ok(());
    };
    for &a in &tp.info_sets()[set].actions {
        let mut next = rest.to_vec();
        next.extend_from_slice(tp.children_of(a));
        choices.push((set, a));
        enumerate(tp, owner, next, choices, out, cap)?;
        choices.pop();
    }
    Ok(())
}

fn materialize(tp: &Treeplex, owner: Player, choices: &[(usize, usize)]) -> PureStrategy {
    let mut values = DVector::zeros(tp.num_sequences());
    for &(_, a) in choices {
        values[a] = 1.0;
    }
    PureStrategy {
        choices: choices.to_vec(),
        plan: RealizationPlan::new(values, owner),
    }
}
