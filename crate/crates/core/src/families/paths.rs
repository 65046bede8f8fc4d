//! Playout machinery over built games: exhaustive enumeration of terminal
//! paths (for exact expectations) and sequential sampling (for datasets).
//!
//! A playout records the deepest sequence each player actually played,
//! which is what observation records carry. Its probability factors as
//! `chance reach x row plan entry x column plan entry`, since realization
//! plans are exactly the product of a player's own conditionals along a
//! sequence.

use crate::families::{BuiltGame, ChanceModel, poker, security};
use crate::game::{RealizationPlan, behavioral_from_realization};
use nalgebra::DVector;
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

/// Chance events recorded alongside an observation for dataset realism;
/// never part of the loss.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChanceDraw {
    /// Cards dealt to the row and column player.
    Cards([usize; 2]),
    /// Stage outcomes, `true` for a successful attack.
    Outcomes(Vec<bool>),
}

/// One terminal path through the game.
#[derive(Debug, Clone)]
pub struct Playout {
    pub prob: f64,
    /// Deepest row-player sequence on the path.
    pub row_seq: usize,
    /// Deepest column-player sequence on the path.
    pub col_seq: usize,
    pub chance: Option<ChanceDraw>,
}

/// Enumerates every terminal path with its exact probability under the
/// given plans. Probabilities sum to 1 for feasible plans.
pub fn enumerate_playouts(
    built: &BuiltGame,
    u: &RealizationPlan,
    v: &RealizationPlan,
) -> Vec<Playout> {
    let uv = &u.values;
    let vv = &v.values;
    match &built.chance {
        ChanceModel::None => {
            let mut out = Vec::with_capacity(uv.len() * vv.len());
            for i in 0..uv.len() {
                for j in 0..vv.len() {
                    out.push(Playout {
                        prob: uv[i] * vv[j],
                        row_seq: i,
                        col_seq: j,
                        chance: None,
                    });
                }
            }
            out
        }
        ChanceModel::PokerDeal { deal, .. } => {
            let n = deal.nrows();
            let mut out = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if i == j || deal[(i, j)] == 0.0 {
                        continue;
                    }
                    let w = deal[(i, j)];
                    let chance = Some(ChanceDraw::Cards([i, j]));
                    // (row deepest, col deepest) for each of the five ways
                    // the betting can go.
                    let ends = [
                        (poker::check(n, i), poker::check_back(n, j)),
                        (
                            poker::fold_after_raise(n, i),
                            poker::raise_after_check(n, j),
                        ),
                        (
                            poker::call_after_raise(n, i),
                            poker::raise_after_check(n, j),
                        ),
                        (poker::bet(n, i), poker::fold_after_bet(n, j)),
                        (poker::bet(n, i), poker::call_after_bet(n, j)),
                    ];
                    for (rs, cs) in ends {
                        out.push(Playout {
                            prob: w * uv[rs] * vv[cs],
                            row_seq: rs,
                            col_seq: cs,
                            chance: chance.clone(),
                        });
                    }
                }
            }
            out
        }
        ChanceModel::SecurityOutcomes { success } => {
            let n = success.nrows();
            let cols = success.ncols();
            let mut out = Vec::new();
            for c in 0..cols {
                for first in 0..n {
                    let p_succ = success[(first, c)];
                    for (outcome, prob_o) in [(0usize, p_succ), (1, 1.0 - p_succ)] {
                        if prob_o == 0.0 {
                            continue;
                        }
                        for second in 0..n {
                            let rs = security::stage2_seq(n, first, outcome, second);
                            out.push(Playout {
                                prob: vv[c] * prob_o * uv[rs],
                                row_seq: rs,
                                col_seq: c,
                                chance: Some(ChanceDraw::Outcomes(vec![outcome == 0])),
                            });
                        }
                    }
                }
            }
            out
        }
    }
}

/// Marginal probability of each sequence being the deepest one played, for
/// one player. Indexed by sequence.
pub fn terminal_distribution(
    built: &BuiltGame,
    u: &RealizationPlan,
    v: &RealizationPlan,
) -> (DVector<f64>, DVector<f64>) {
    let mut row = DVector::zeros(u.len());
    let mut col = DVector::zeros(v.len());
    for p in enumerate_playouts(built, u, v) {
        row[p.row_seq] += p.prob;
        col[p.col_seq] += p.prob;
    }
    (row, col)
}

/// Samples one playout by walking the game forward: chance first where the
/// family has it, then the players' behavioral strategies.
pub fn sample_playout<R: Rng>(
    built: &BuiltGame,
    u: &RealizationPlan,
    v: &RealizationPlan,
    rng: &mut R,
) -> Playout {
    let sigma_u = behavioral_from_realization(u, &built.game.row_treeplex);
    let sigma_v = behavioral_from_realization(v, &built.game.col_treeplex);
    match &built.chance {
        ChanceModel::None => {
            let i = draw(rng, sigma_u.iter().copied());
            let j = draw(rng, sigma_v.iter().copied());
            Playout {
                prob: u.values[i] * v.values[j],
                row_seq: i,
                col_seq: j,
                chance: None,
            }
        }
        ChanceModel::PokerDeal { weights, .. } => {
            let n = weights.len();
            let i = draw(rng, weights.iter().copied());
            let j = draw(
                rng,
                (0..n).map(|j| {
                    if j == i {
                        0.0
                    } else {
                        weights[j] / (1.0 - weights[i])
                    }
                }),
            );
            let chance = Some(ChanceDraw::Cards([i, j]));
            // Player 1 acts at the card-i root info set.
            if sample_binary(rng, sigma_u[poker::bet(n, i)]) {
                // Bet: player 2 folds or calls.
                let col_seq = if sample_binary(rng, sigma_v[poker::call_after_bet(n, j)]) {
                    poker::call_after_bet(n, j)
                } else {
                    poker::fold_after_bet(n, j)
                };
                playout_for(built, u, v, poker::bet(n, i), col_seq, chance)
            } else if sample_binary(rng, sigma_v[poker::raise_after_check(n, j)]) {
                // Check, raise: player 1 folds or calls.
                let row_seq = if sample_binary(rng, sigma_u[poker::call_after_raise(n, i)]) {
                    poker::call_after_raise(n, i)
                } else {
                    poker::fold_after_raise(n, i)
                };
                playout_for(built, u, v, row_seq, poker::raise_after_check(n, j), chance)
            } else {
                // Check, check-back.
                playout_for(
                    built,
                    u,
                    v,
                    poker::check(n, i),
                    poker::check_back(n, j),
                    chance,
                )
            }
        }
        ChanceModel::SecurityOutcomes { success } => {
            let n = success.nrows();
            let c = draw(rng, sigma_v.iter().copied());
            let first = draw(rng, (0..n).map(|i| sigma_u[i]));
            let succeeded = sample_binary(rng, success[(first, c)]);
            let outcome = if succeeded { 0 } else { 1 };
            let set = security::stage2_info_set(first, outcome);
            let second_seq = {
                let actions = &built.game.row_treeplex.info_sets()[set].actions;
                let idx = draw(rng, actions.iter().map(|&a| sigma_u[a]));
                actions[idx]
            };
            playout_for(
                built,
                u,
                v,
                second_seq,
                c,
                Some(ChanceDraw::Outcomes(vec![succeeded])),
            )
        }
    }
}

fn playout_for(
    built: &BuiltGame,
    u: &RealizationPlan,
    v: &RealizationPlan,
    row_seq: usize,
    col_seq: usize,
    chance: Option<ChanceDraw>,
) -> Playout {
    let chance_weight = match (&built.chance, &chance) {
        (ChanceModel::PokerDeal { deal, .. }, Some(ChanceDraw::Cards([i, j]))) => deal[(*i, *j)],
        (ChanceModel::SecurityOutcomes { success }, Some(ChanceDraw::Outcomes(o))) => {
            let first = built
                .game
                .row_treeplex
                .parent_of(row_seq)
                .expect("stage-2 sequence");
            let p = success[(first, col_seq)];
            if o[0] { p } else { 1.0 - p }
        }
        _ => 1.0,
    };
    Playout {
        prob: chance_weight * u.values[row_seq] * v.values[col_seq],
        row_seq,
        col_seq,
        chance,
    }
}

/// Draws an index proportionally to the given nonnegative weights.
fn draw<R: Rng>(rng: &mut R, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().sum();
    let mut t = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        last = i;
        if t < w {
            return i;
        }
        t -= w;
    }
    last
}

fn sample_binary<R: Rng>(rng: &mut R, p_true: f64) -> bool {
    rng.random::<f64>() < p_true
}
