//! One-card poker with a stacked deck.
//!
//! `n` cards are dealt without replacement from a non-uniform deck with
//! weights `d`. Both players ante one unit. Player 1 (row, minimizer) checks
//! or bets one more; after a bet, player 2 folds or calls; after a check,
//! player 2 checks back (showdown for the ante) or raises, in which case
//! player 1 folds or calls. Chance is folded into the payoff matrix through
//! the deal matrix `D_ij = d_i d_j / (1 - d_i)`.
//!
//! Sequences are laid out in blocks of `n`, one entry per card:
//! row `[check | bet | fold | call]`, column
//! `[check-back | raise-after-check | fold-after-bet | call-after-bet]`.

use crate::error::BuildError;
use crate::game::{InfoSet, PayoffMatrix, SequenceFormGame, Treeplex};
use crate::numeric::softmax;
use nalgebra::{DMatrix, DVector};

/// Deck parameters: raw logits, mapped through softmax to card weights so
/// any real vector is a valid deck.
#[derive(Debug, Clone)]
pub struct PokerParams {
    pub logits: DVector<f64>,
}

impl PokerParams {
    pub fn cards(&self) -> usize {
        self.logits.len()
    }

    /// Card weights `d = softmax(logits)`.
    pub fn weights(&self) -> DVector<f64> {
        softmax(&self.logits)
    }
}

/// Row sequence indices.
pub fn check(n: usize, card: usize) -> usize {
    debug_assert!(card < n);
    card
}
pub fn bet(n: usize, card: usize) -> usize {
    n + card
}
pub fn fold_after_raise(n: usize, card: usize) -> usize {
    2 * n + card
}
pub fn call_after_raise(n: usize, card: usize) -> usize {
    3 * n + card
}

/// Column sequence indices.
pub fn check_back(n: usize, card: usize) -> usize {
    debug_assert!(card < n);
    card
}
pub fn raise_after_check(n: usize, card: usize) -> usize {
    n + card
}
pub fn fold_after_bet(n: usize, card: usize) -> usize {
    2 * n + card
}
pub fn call_after_bet(n: usize, card: usize) -> usize {
    3 * n + card
}

pub fn row_treeplex(n: usize) -> Treeplex {
    let mut sets = Vec::with_capacity(2 * n);
    for i in 0..n {
        sets.push(InfoSet {
            actions: vec![check(n, i), bet(n, i)],
            parent: None,
        });
    }
    for i in 0..n {
        sets.push(InfoSet {
            actions: vec![fold_after_raise(n, i), call_after_raise(n, i)],
            parent: Some(check(n, i)),
        });
    }
    Treeplex::new(sets, 4 * n).expect("poker row treeplex is valid")
}

pub fn col_treeplex(n: usize) -> Treeplex {
    let mut sets = Vec::with_capacity(2 * n);
    for j in 0..n {
        sets.push(InfoSet {
            actions: vec![check_back(n, j), raise_after_check(n, j)],
            parent: None,
        });
    }
    for j in 0..n {
        sets.push(InfoSet {
            actions: vec![fold_after_bet(n, j), call_after_bet(n, j)],
            parent: None,
        });
    }
    Treeplex::new(sets, 4 * n).expect("poker col treeplex is valid")
}

/// Deal matrix `D_ij = d_i d_j / (1 - d_i)` with zero diagonal; entry
/// `(i, j)` is the probability the row player holds card `i` and the column
/// player holds card `j`. Total mass is 1.
pub fn deal_matrix(d: &DVector<f64>) -> Result<DMatrix<f64>, BuildError> {
    let n = d.len();
    if let Some(i) = d.iter().position(|x| *x >= 1.0 - 1e-12) {
        return Err(BuildError::DegenerateDeck { index: i });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            d[i] * d[j] / (1.0 - d[i])
        }
    }))
}

/// Showdown sign: +1 when the column player's card wins (row pays), with a
/// zero diagonal since equal cards are never dealt.
fn showdown_sign(i: usize, j: usize) -> f64 {
    ((j as i64 - i as i64).signum()) as f64
}

/// Builds the sequence-form game. Stakes are in antes: showdowns after a
/// check-back pay ±1, folds pay ±1, called raises pay ±2.
pub fn build(
    params: &PokerParams,
) -> Result<(SequenceFormGame, DVector<f64>, DMatrix<f64>), BuildError> {
    let n = params.cards();
    assert!(n >= 2, "one-card poker needs at least two cards");
    let d = params.weights();
    let deal = deal_matrix(&d)?;

    let mut p = DMatrix::zeros(4 * n, 4 * n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = deal[(i, j)];
            let s = showdown_sign(i, j);
            p[(check(n, i), check_back(n, j))] = w * s;
            p[(bet(n, i), fold_after_bet(n, j))] = -w;
            p[(bet(n, i), call_after_bet(n, j))] = 2.0 * w * s;
            p[(fold_after_raise(n, i), raise_after_check(n, j))] = w;
            p[(call_after_raise(n, i), raise_after_check(n, j))] = 2.0 * w * s;
        }
    }

    let game = SequenceFormGame::new(
        PayoffMatrix::new(p).expect("finite poker payoffs"),
        row_treeplex(n),
        col_treeplex(n),
    )
    .expect("poker game is structurally valid");
    Ok((game, d, deal))
}

/// Pulls an upstream payoff gradient back to the deck logits: first to the
/// deal matrix, then through `D(d)` and the softmax Jacobian.
pub fn vjp(params: &PokerParams, upstream: &DMatrix<f64>) -> Result<DVector<f64>, BuildError> {
    let n = params.cards();
    if upstream.shape() != (4 * n, 4 * n) {
        return Err(BuildError::ShapeMismatch(format!(
            "upstream gradient is {:?}, expected {:?}",
            upstream.shape(),
            (4 * n, 4 * n)
        )));
    }
    let d = params.weights();

    // dL/dD from the five payoff blocks each deal entry touches.
    let mut grad_deal = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let s = showdown_sign(i, j);
            grad_deal[(i, j)] = s * upstream[(check(n, i), check_back(n, j))]
                - upstream[(bet(n, i), fold_after_bet(n, j))]
                + 2.0 * s * upstream[(bet(n, i), call_after_bet(n, j))]
                + upstream[(fold_after_raise(n, i), raise_after_check(n, j))]
                + 2.0 * s * upstream[(call_after_raise(n, i), raise_after_check(n, j))];
        }
    }

    // dL/dd: D_ij = d_i d_j / (1 - d_i), so dD_ij/dd_i = d_j/(1-d_i)^2 and
    // dD_ij/dd_j = d_i/(1-d_i).
    let mut grad_d = DVector::zeros(n);
    for l in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            if j != l {
                acc += grad_deal[(l, j)] * d[j] / ((1.0 - d[l]) * (1.0 - d[l]));
                acc += grad_deal[(j, l)] * d[j] / (1.0 - d[j]);
            }
        }
        grad_d[l] = acc;
    }

    // Softmax Jacobian transpose: g_z = d ∘ (g_d - <g_d, d>).
    let inner = grad_d.dot(&d);
    Ok(DVector::from_fn(n, |l, _| d[l] * (grad_d[l] - inner)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn uniform_params(n: usize) -> PokerParams {
        PokerParams {
            logits: DVector::zeros(n),
        }
    }

    #[test]
    fn uniform_deck_deal_entries_are_one_twelfth() {
        let d = uniform_params(4).weights();
        let deal = deal_matrix(&d).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    assert_eq!(deal[(i, j)], 0.0);
                } else {
                    assert!((deal[(i, j)] - 1.0 / 12.0).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn deal_matrix_rows_sum_to_card_weights() {
        let params = PokerParams {
            logits: dvector![0.3, -1.0, 0.8, 0.1],
        };
        let d = params.weights();
        let deal = deal_matrix(&d).unwrap();
        let mut total = 0.0;
        for i in 0..4 {
            let row_sum: f64 = (0..4).map(|j| deal[(i, j)]).sum();
            assert!((row_sum - d[i]).abs() < 1e-14);
            total += row_sum;
        }
        assert!((total - 1.0).abs() < 1e-14);
        assert!(deal.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn degenerate_deck_is_rejected() {
        let d = dvector![1.0 - 1e-14, 1e-14];
        assert!(matches!(
            deal_matrix(&d),
            Err(BuildError::DegenerateDeck { index: 0 })
        ));
    }

    #[test]
    fn payoff_blocks_follow_the_bet_structure() {
        let (game, _, deal) = build(&uniform_params(4)).unwrap();
        let p = game.payoff.matrix();
        let n = 4;
        // check vs check-back: one-ante showdown.
        assert!((p[(check(n, 1), check_back(n, 3))] - deal[(1, 3)]).abs() < 1e-15);
        assert!((p[(check(n, 3), check_back(n, 1))] + deal[(3, 1)]).abs() < 1e-15);
        // bet vs fold: row collects the ante.
        assert!((p[(bet(n, 2), fold_after_bet(n, 0))] + deal[(2, 0)]).abs() < 1e-15);
        // bet vs call: two-ante showdown.
        assert!((p[(bet(n, 0), call_after_bet(n, 2))] - 2.0 * deal[(0, 2)]).abs() < 1e-15);
        // check-raise-fold: row forfeits the ante.
        assert!(
            (p[(fold_after_raise(n, 1), raise_after_check(n, 2))] - deal[(1, 2)]).abs() < 1e-15
        );
        // check-raise-call: two-ante showdown.
        assert!(
            (p[(call_after_raise(n, 2), raise_after_check(n, 1))] + 2.0 * deal[(2, 1)]).abs()
                < 1e-15
        );
        // Everything else in those rows is zero.
        assert_eq!(p[(check(n, 0), fold_after_bet(n, 1))], 0.0);
        assert_eq!(p[(check(n, 0), raise_after_check(n, 1))], 0.0);
        assert_eq!(p[(bet(n, 0), check_back(n, 1))], 0.0);
    }

    #[test]
    fn constraint_matrix_matches_the_printed_blocks() {
        let (game, _, _) = build(&uniform_params(4)).unwrap();
        let e = &game.row_constraints.matrix;
        let n = 4;
        let mut expected = DMatrix::zeros(2 * n, 4 * n);
        for i in 0..n {
            expected[(i, i)] = 1.0;
            expected[(i, n + i)] = 1.0;
            expected[(n + i, i)] = -1.0;
            expected[(n + i, 2 * n + i)] = 1.0;
            expected[(n + i, 3 * n + i)] = 1.0;
        }
        assert_eq!(e, &expected);
        let rhs: Vec<f64> = game.row_constraints.rhs.iter().copied().collect();
        assert_eq!(rhs, vec![1., 1., 1., 1., 0., 0., 0., 0.]);

        // The column player's constraints match [[I,0,I,0],[0,I,0,I]] after
        // permuting the column blocks to [check-back, fold-after-bet,
        // raise-after-check, call-after-bet]: the info-set grouping is the
        // same up to that relabeling.
        let f = &game.col_constraints.matrix;
        let block_perm: Vec<usize> = (0..n)
            .map(|j| check_back(n, j))
            .chain((0..n).map(|j| fold_after_bet(n, j)))
            .chain((0..n).map(|j| raise_after_check(n, j)))
            .chain((0..n).map(|j| call_after_bet(n, j)))
            .collect();
        let mut printed = DMatrix::zeros(2 * n, 4 * n);
        for j in 0..n {
            printed[(j, j)] = 1.0;
            printed[(j, 2 * n + j)] = 1.0;
            printed[(n + j, n + j)] = 1.0;
            printed[(n + j, 3 * n + j)] = 1.0;
        }
        let permuted = DMatrix::from_fn(2 * n, 4 * n, |r, c| f[(r, block_perm[c])]);
        assert_eq!(permuted, printed);
        assert!(game.col_constraints.rhs.iter().all(|x| *x == 1.0));
    }

    #[test]
    fn vjp_rejects_wrong_shapes() {
        let params = uniform_params(3);
        let bad = DMatrix::zeros(4, 4);
        assert!(matches!(
            vjp(&params, &bad),
            Err(BuildError::ShapeMismatch(_))
        ));
    }
}
