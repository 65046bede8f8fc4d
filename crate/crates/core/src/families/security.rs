//! Security resource allocation game.
//!
//! The defender (column, maximizer) splits `k` indistinguishable resources
//! among `n` targets in a single root decision. The attacker (row,
//! minimizer) picks a target per stage; each resource on the attacked
//! target independently halves the success probability, so an attack on
//! target `i` under allocation `κ` succeeds with probability `2^{-κ_i}` and
//! is worth `-R_i` to the attacker on success, 0 otherwise.
//!
//! With two stages (`t = 2`) the attacker observes whether the first attack
//! succeeded before choosing the second target, while the defender cannot
//! reallocate. Outcome probabilities are folded into the payoff entries of
//! the attacker's terminal sequences, which is valid because the defender
//! moves once at the root.

use crate::error::BuildError;
use crate::game::{InfoSet, PayoffMatrix, SequenceFormGame, Treeplex};
use nalgebra::{DMatrix, DVector};

/// Target values parametrized as `R_i = tanh(r_i) + 1`, keeping rewards in
/// `(0, 2)` for any real `r`.
#[derive(Debug, Clone)]
pub struct SecurityParams {
    pub targets: usize,
    pub resources: usize,
    pub stages: u8,
    pub raw: DVector<f64>,
}

impl SecurityParams {
    pub fn rewards(&self) -> DVector<f64> {
        self.raw.map(|r| r.tanh() + 1.0)
    }
}

/// All ways to allocate `k` indivisible resources over `n` targets, in
/// lexicographic order of `(κ_1, ..., κ_n)`.
pub fn allocations(n: usize, k: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, k: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if n == 1 {
            prefix.push(k);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=k {
            prefix.push(first);
            rec(n - 1, k - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, &mut Vec::new(), &mut out);
    out
}

/// Attacker sequence index for "attacked `first` in stage 1, observed
/// `outcome` (0 = success, 1 = failure), then attacked `second`".
pub fn stage2_seq(n: usize, first: usize, outcome: usize, second: usize) -> usize {
    n + first * 2 * n + outcome * n + second
}

/// Index of the attacker info set reached after `(first, outcome)`, in the
/// info-set ordering used by the treeplex (root first).
pub fn stage2_info_set(first: usize, outcome: usize) -> usize {
    1 + first * 2 + outcome
}

fn attacker_treeplex(n: usize, stages: u8) -> Treeplex {
    if stages == 1 {
        return Treeplex::single_info_set(n);
    }
    let mut sets = vec![InfoSet {
        actions: (0..n).collect(),
        parent: None,
    }];
    for first in 0..n {
        for outcome in 0..2 {
            sets.push(InfoSet {
                actions: (0..n).map(|j| stage2_seq(n, first, outcome, j)).collect(),
                parent: Some(first),
            });
        }
    }
    Treeplex::new(sets, n + 2 * n * n).expect("attacker treeplex is valid")
}

/// A built security game with the pieces samplers need: the allocation
/// list (column order) and the success-probability matrix
/// `success[i, col] = 2^{-κ_i}`.
#[derive(Debug, Clone)]
pub struct SecurityGame {
    pub game: SequenceFormGame,
    pub allocations: Vec<Vec<u32>>,
    pub success: DMatrix<f64>,
}

pub fn build(params: &SecurityParams) -> Result<SecurityGame, BuildError> {
    let n = params.targets;
    assert!(n >= 2, "need at least two targets");
    assert!(params.resources >= 1, "need at least one resource");
    if params.stages == 0 || params.stages > 2 {
        return Err(BuildError::UnsupportedStages(params.stages));
    }
    if params.raw.len() != n {
        return Err(BuildError::ShapeMismatch(format!(
            "{} raw rewards for {} targets",
            params.raw.len(),
            n
        )));
    }
    let rewards = params.rewards();
    let allocs = allocations(n, params.resources as u32);
    let cols = allocs.len();
    let success = DMatrix::from_fn(n, cols, |i, c| 0.5f64.powi(allocs[c][i] as i32));

    let payoff = if params.stages == 1 {
        DMatrix::from_fn(n, cols, |i, c| -rewards[i] * success[(i, c)])
    } else {
        let rows = n + 2 * n * n;
        let mut p = DMatrix::zeros(rows, cols);
        for first in 0..n {
            for c in 0..cols {
                let p_succ = success[(first, c)];
                for (outcome, (prob, stage1_reward)) in
                    [(p_succ, -rewards[first]), (1.0 - p_succ, 0.0)]
                        .iter()
                        .enumerate()
                {
                    for second in 0..n {
                        p[(stage2_seq(n, first, outcome, second), c)] =
                            prob * (stage1_reward - rewards[second] * success[(second, c)]);
                    }
                }
            }
        }
        p
    };

    let row_tp = attacker_treeplex(n, params.stages);
    let col_tp = Treeplex::single_info_set(cols);
    let game = SequenceFormGame::new(
        PayoffMatrix::new(payoff).expect("finite security payoffs"),
        row_tp,
        col_tp,
    )
    .expect("security game is structurally valid");
    Ok(SecurityGame {
        game,
        allocations: allocs,
        success,
    })
}

/// Pulls an upstream payoff gradient back to the raw reward parameters
/// through the tanh clipping.
pub fn vjp(params: &SecurityParams, upstream: &DMatrix<f64>) -> Result<DVector<f64>, BuildError> {
    let n = params.targets;
    let rewards = params.rewards();
    let allocs = allocations(n, params.resources as u32);
    let cols = allocs.len();
    let expected_rows = if params.stages == 1 { n } else { n + 2 * n * n };
    if upstream.shape() != (expected_rows, cols) {
        return Err(BuildError::ShapeMismatch(format!(
            "upstream gradient is {:?}, expected {:?}",
            upstream.shape(),
            (expected_rows, cols)
        )));
    }

    let success = |i: usize, c: usize| 0.5f64.powi(allocs[c][i] as i32);
    let mut grad_r = DVector::<f64>::zeros(n);
    if params.stages == 1 {
        for i in 0..n {
            for c in 0..cols {
                grad_r[i] += upstream[(i, c)] * (-success(i, c));
            }
        }
    } else {
        for first in 0..n {
            for c in 0..cols {
                let p_succ = success(first, c);
                for outcome in 0..2 {
                    let prob = if outcome == 0 { p_succ } else { 1.0 - p_succ };
                    for second in 0..n {
                        let g = upstream[(stage2_seq(n, first, outcome, second), c)];
                        if outcome == 0 {
                            grad_r[first] += g * (-prob);
                        }
                        grad_r[second] += g * (-prob * success(second, c));
                    }
                }
            }
        }
    }

    // dR/dr = 1 - tanh(r)^2, and tanh(r) = R - 1.
    Ok(DVector::from_fn(n, |i, _| {
        let t = rewards[i] - 1.0;
        grad_r[i] * (1.0 - t * t)
    }))
}
