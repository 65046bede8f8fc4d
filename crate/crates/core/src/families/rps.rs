//! Contextual rock-paper-scissors: payoffs `b_y = xᵀw_y` depend linearly on
//! a feature vector.

use crate::game::{NormalFormGame, PayoffMatrix};
use nalgebra::{DMatrix, DVector};

/// Weights of the three off-diagonal payoffs; `weights[y]` has the context
/// dimension.
#[derive(Debug, Clone)]
pub struct RpsParams {
    pub weights: [DVector<f64>; 3],
}

impl RpsParams {
    pub fn from_flat(flat: &DVector<f64>, context_dim: usize) -> Self {
        assert_eq!(flat.len(), 3 * context_dim, "rps parameter length");
        let w = |y: usize| flat.rows(y * context_dim, context_dim).into_owned();
        Self {
            weights: [w(0), w(1), w(2)],
        }
    }

    pub fn payoffs(&self, context: &DVector<f64>) -> [f64; 3] {
        [
            self.weights[0].dot(context),
            self.weights[1].dot(context),
            self.weights[2].dot(context),
        ]
    }
}

/// The antisymmetric payoff matrix
/// `[[0, -b1, b2], [b1, 0, -b3], [-b2, b3, 0]]`, read as the row player's
/// (minimized) payoff. `b = (1, 1, 1)` recovers classic rock-paper-scissors.
pub fn build(params: &RpsParams, context: &DVector<f64>) -> NormalFormGame {
    let [b1, b2, b3] = params.payoffs(context);
    let matrix = DMatrix::from_row_slice(
        3,
        3,
        &[
            0.0, -b1, b2, //
            b1, 0.0, -b3, //
            -b2, b3, 0.0,
        ],
    );
    NormalFormGame::new(PayoffMatrix::new(matrix).expect("finite rps payoffs"))
}

/// Pulls an upstream payoff gradient back to the weight vector. `P` is
/// linear in the weights, so this is exact.
pub fn vjp(context: &DVector<f64>, upstream: &DMatrix<f64>) -> DVector<f64> {
    let db = [
        -upstream[(0, 1)] + upstream[(1, 0)],
        upstream[(0, 2)] - upstream[(2, 0)],
        -upstream[(1, 2)] + upstream[(2, 1)],
    ];
    let d = context.len();
    let mut grad = DVector::zeros(3 * d);
    for (y, dby) in db.iter().enumerate() {
        for i in 0..d {
            grad[y * d + i] = dby * context[i];
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn unit_weights_reproduce_classic_rps() {
        let params = RpsParams::from_flat(&dvector![1.0, 1.0, 1.0], 1);
        let game = build(&params, &dvector![1.0]);
        let expected =
            DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 1.0, 1.0, 0.0, -1.0, -1.0, 1.0, 0.0]);
        assert_eq!(game.payoff.matrix(), &expected);
    }

    #[test]
    fn zero_context_gives_zero_payoffs() {
        let params = RpsParams::from_flat(&dvector![3.0, 1.0, -2.0, 0.5, 4.0, 1.0], 2);
        let game = build(&params, &dvector![0.0, 0.0]);
        assert_eq!(game.payoff.matrix().amax(), 0.0);
    }

    #[test]
    fn payoff_is_always_antisymmetric() {
        let params = RpsParams::from_flat(&dvector![3.0, 1.0, -2.0, 0.5, 4.0, 1.0], 2);
        let game = build(&params, &dvector![0.3, 0.9]);
        let p = game.payoff.matrix();
        assert_eq!(p, &-p.transpose());
    }

    #[test]
    fn vjp_is_linear_in_the_upstream() {
        let x = dvector![0.4, 0.7];
        let g = DMatrix::from_fn(3, 3, |r, c| (r * 3 + c) as f64 - 4.0);
        let a = vjp(&x, &(2.5 * &g));
        let b = 2.5 * vjp(&x, &g);
        assert!((a - b).amax() < 1e-14);
    }
}
