//! Shared test oracles. Everything here is independent of the solver
//! implementation paths it is used to check.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use qreforge::game::{InfoSet, Treeplex};
use qreforge::{PayoffMatrix, Player, RealizationPlan};
use rand::RngExt;
use rand_chacha::ChaCha12Rng;
use std::collections::VecDeque;

/// Independent softmax (the oracle must not share the solver's helpers).
pub fn softmax_vec(z: &DVector<f64>) -> DVector<f64> {
    let max = z.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    let exps = z.map(|x| (x - max).exp());
    let sum = exps.sum();
    exps / sum
}

/// Damped fixed-point iteration on `u = softmax(-Pv)`, `v = softmax(Pᵀu)`,
/// starting at step 0.5. Strongly coupled games make the plain iteration
/// oscillate, so the step is halved whenever the residual fails to
/// decrease; the iteration then tracks the (globally convergent) logit
/// response flow.
pub fn damped_fixed_point_oracle(
    payoff: &PayoffMatrix,
    tol: f64,
    max_iters: usize,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let p = payoff.matrix();
    let (n, m) = (p.nrows(), p.ncols());
    let mut u = DVector::from_element(n, 1.0 / n as f64);
    let mut v = DVector::from_element(m, 1.0 / m as f64);
    let mut step = 0.5;
    let mut prev = f64::INFINITY;
    for _ in 0..max_iters {
        let bu = softmax_vec(&(-(p * &v)));
        let bv = softmax_vec(&(p.transpose() * &u));
        let res = (&bu - &u).amax().max((&bv - &v).amax());
        if res <= tol {
            return Some((u, v));
        }
        if res > prev && step > 1e-3 {
            step *= 0.5;
        }
        prev = res;
        u = (1.0 - step) * &u + step * bu;
        v = (1.0 - step) * &v + step * bv;
    }
    None
}

pub fn random_payoff(rng: &mut ChaCha12Rng, n: usize, m: usize, scale: f64) -> PayoffMatrix {
    PayoffMatrix::new(DMatrix::from_fn(n, m, |_, _| {
        (rng.random::<f64>() * 2.0 - 1.0) * scale
    }))
    .unwrap()
}

/// Random treeplex for property tests: bounded depth and branching so the
/// reduced normal form stays enumerable.
pub fn random_treeplex(rng: &mut ChaCha12Rng, max_depth: usize) -> Treeplex {
    let mut info_sets: Vec<InfoSet> = Vec::new();
    let mut sequences = 0usize;
    let mut queue: VecDeque<(Option<usize>, usize)> = VecDeque::new();
    let roots = 1 + rng.random_range(0..2);
    for _ in 0..roots {
        queue.push_back((None, 0));
    }
    while let Some((parent, depth)) = queue.pop_front() {
        let arity = 2 + rng.random_range(0..2);
        let actions: Vec<usize> = (sequences..sequences + arity).collect();
        sequences += arity;
        if depth < max_depth {
            for &a in &actions {
                if rng.random::<f64>() < 0.35 {
                    queue.push_back((Some(a), depth + 1));
                }
            }
        }
        info_sets.push(InfoSet { actions, parent });
    }
    Treeplex::new(info_sets, sequences).unwrap()
}

/// Strictly interior random plan via random behavioral conditionals.
pub fn random_interior_plan(
    rng: &mut ChaCha12Rng,
    tp: &Treeplex,
    owner: Player,
) -> RealizationPlan {
    let mut sigma = DVector::zeros(tp.num_sequences());
    for set in tp.info_sets() {
        let weights: Vec<f64> = set
            .actions
            .iter()
            .map(|_| 0.1 + rng.random::<f64>())
            .collect();
        let total: f64 = weights.iter().sum();
        for (&a, w) in set.actions.iter().zip(&weights) {
            sigma[a] = w / total;
        }
    }
    qreforge::game::realization_from_behavioral(&sigma, tp, owner).unwrap()
}

/// Relative Frobenius distance between an analytic and a reference matrix.
pub fn rel_frobenius(analytic: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let denom = reference.norm().max(1e-12);
    (analytic - reference).norm() / denom
}

/// Central finite differences of a scalar loss through a payoff matrix.
pub fn fd_payoff_gradient<F: FnMut(&PayoffMatrix) -> f64>(
    payoff: &PayoffMatrix,
    h: f64,
    mut loss: F,
) -> DMatrix<f64> {
    let (n, m) = (payoff.rows(), payoff.cols());
    DMatrix::from_fn(n, m, |r, c| {
        let mut plus = payoff.matrix().clone();
        plus[(r, c)] += h;
        let mut minus = payoff.matrix().clone();
        minus[(r, c)] -= h;
        let lp = loss(&PayoffMatrix::new(plus).unwrap());
        let lm = loss(&PayoffMatrix::new(minus).unwrap());
        (lp - lm) / (2.0 * h)
    })
}

/// Central finite differences of a scalar loss in parameter space.
pub fn fd_param_gradient<F: FnMut(&DVector<f64>) -> f64>(
    theta: &DVector<f64>,
    h: f64,
    mut loss: F,
) -> DVector<f64> {
    DVector::from_fn(theta.len(), |i, _| {
        let mut plus = theta.clone();
        plus[i] += h;
        let mut minus = theta.clone();
        minus[i] -= h;
        (loss(&plus) - loss(&minus)) / (2.0 * h)
    })
}

/// Upper critical value of the chi-square distribution via the
/// Wilson-Hilferty approximation; accurate to a few percent for the
/// moderate degrees of freedom used here.
pub fn chi_square_critical(df: usize, alpha: f64) -> f64 {
    let z = match alpha {
        a if (a - 0.001).abs() < 1e-12 => 3.090232306167814,
        a if (a - 0.01).abs() < 1e-12 => 2.3263478740408408,
        a if (a - 0.05).abs() < 1e-12 => 1.6448536269514722,
        _ => panic!("unsupported alpha {alpha}"),
    };
    let d = df as f64;
    let t = 1.0 - 2.0 / (9.0 * d) + z * (2.0 / (9.0 * d)).sqrt();
    d * t.powi(3)
}

/// Mean and standard error of a sample.
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
