//! The three parametrized game families used in the experiments, plus the
//! vector-Jacobian products that pull payoff gradients back to their
//! low-dimensional parameters.
//!
//! | family   | raw parameters        | natural parameters          |
//! |----------|-----------------------|-----------------------------|
//! | rps      | weights `w` (3 x dim) | the same weights            |
//! | poker    | deck logits `z`       | card weights `d=softmax(z)` |
//! | security | raw rewards `r`       | target values `tanh(r)+1`   |

mod paths;
pub mod poker;
pub mod rps;
pub mod security;

pub use paths::{ChanceDraw, Playout, enumerate_playouts, sample_playout, terminal_distribution};
pub use poker::PokerParams;
pub use rps::RpsParams;
pub use security::SecurityParams;

use crate::error::BuildError;
use crate::game::SequenceFormGame;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

/// Which game family and its structural sizes; the learnable parameters
/// live in a separate flat vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FamilySpec {
    Rps {
        context_dim: usize,
    },
    Poker {
        cards: usize,
    },
    Security {
        targets: usize,
        resources: usize,
        stages: u8,
    },
}

/// Chance structure of a built game, used when sampling play and when
/// enumerating terminal paths.
#[derive(Debug, Clone)]
pub enum ChanceModel {
    None,
    PokerDeal {
        weights: DVector<f64>,
        deal: DMatrix<f64>,
    },
    SecurityOutcomes {
        success: DMatrix<f64>,
    },
}

/// A game instantiated from family parameters (and context where the
/// family is contextual), bundled with its chance model.
#[derive(Debug, Clone)]
pub struct BuiltGame {
    pub game: SequenceFormGame,
    pub chance: ChanceModel,
}

impl BuiltGame {
    /// True when both players have a single info set, in which case the
    /// normal-form solver applies directly.
    pub fn is_normal_shaped(&self) -> bool {
        self.game.row_treeplex.num_info_sets() == 1 && self.game.col_treeplex.num_info_sets() == 1
    }
}

impl FamilySpec {
    pub fn name(&self) -> &'static str {
        match self {
            FamilySpec::Rps { .. } => "rps",
            FamilySpec::Poker { .. } => "poker",
            FamilySpec::Security { .. } => "security",
        }
    }

    /// Length of the flat raw parameter vector.
    pub fn param_dim(&self) -> usize {
        match self {
            FamilySpec::Rps { context_dim } => 3 * context_dim,
            FamilySpec::Poker { cards } => *cards,
            FamilySpec::Security { targets, .. } => *targets,
        }
    }

    pub fn is_contextual(&self) -> bool {
        matches!(self, FamilySpec::Rps { .. })
    }

    pub fn build(
        &self,
        raw: &DVector<f64>,
        context: Option<&DVector<f64>>,
    ) -> Result<BuiltGame, BuildError> {
        self.check_param_len(raw)?;
        match self {
            FamilySpec::Rps { context_dim } => {
                let x = self.required_context(context, *context_dim)?;
                let params = RpsParams::from_flat(raw, *context_dim);
                let game = rps::build(&params, x).to_sequence_form();
                Ok(BuiltGame {
                    game,
                    chance: ChanceModel::None,
                })
            }
            FamilySpec::Poker { .. } => {
                let params = PokerParams {
                    logits: raw.clone(),
                };
                let (game, weights, deal) = poker::build(&params)?;
                Ok(BuiltGame {
                    game,
                    chance: ChanceModel::PokerDeal { weights, deal },
                })
            }
            FamilySpec::Security {
                targets,
                resources,
                stages,
            } => {
                let params = SecurityParams {
                    targets: *targets,
                    resources: *resources,
                    stages: *stages,
                    raw: raw.clone(),
                };
                let built = security::build(&params)?;
                let chance = if *stages == 2 {
                    ChanceModel::SecurityOutcomes {
                        success: built.success,
                    }
                } else {
                    ChanceModel::None
                };
                Ok(BuiltGame {
                    game: built.game,
                    chance,
                })
            }
        }
    }

    /// Pulls an upstream payoff-matrix gradient back to the raw parameters.
    pub fn payoff_vjp(
        &self,
        raw: &DVector<f64>,
        context: Option<&DVector<f64>>,
        upstream: &DMatrix<f64>,
    ) -> Result<DVector<f64>, BuildError> {
        self.check_param_len(raw)?;
        match self {
            FamilySpec::Rps { context_dim } => {
                let x = self.required_context(context, *context_dim)?;
                if upstream.shape() != (3, 3) {
                    return Err(BuildError::ShapeMismatch(format!(
                        "upstream gradient is {:?}, expected (3, 3)",
                        upstream.shape()
                    )));
                }
                Ok(rps::vjp(x, upstream))
            }
            FamilySpec::Poker { .. } => poker::vjp(
                &PokerParams {
                    logits: raw.clone(),
                },
                upstream,
            ),
            FamilySpec::Security {
                targets,
                resources,
                stages,
            } => security::vjp(
                &SecurityParams {
                    targets: *targets,
                    resources: *resources,
                    stages: *stages,
                    raw: raw.clone(),
                },
                upstream,
            ),
        }
    }

    /// Maps raw parameters to the identified quantities reported in the
    /// experiments (weights, card weights, target values).
    pub fn natural_params(&self, raw: &DVector<f64>) -> DVector<f64> {
        match self {
            FamilySpec::Rps { .. } => raw.clone(),
            FamilySpec::Poker { .. } => PokerParams {
                logits: raw.clone(),
            }
            .weights(),
            FamilySpec::Security { .. } => raw.map(|r| r.tanh() + 1.0),
        }
    }

    /// Inverse of [`Self::natural_params`] (for poker, any logit vector
    /// with the right softmax).
    pub fn raw_from_natural(&self, natural: &DVector<f64>) -> DVector<f64> {
        match self {
            FamilySpec::Rps { .. } => natural.clone(),
            FamilySpec::Poker { .. } => natural.map(|d| d.ln()),
            FamilySpec::Security { .. } => natural.map(|x| (x - 1.0).atanh()),
        }
    }

    /// Draws ground-truth raw parameters the way the experiments do:
    /// weights uniform in [0, 10], decks from a flat Dirichlet, target
    /// values uniform in [0, 2].
    pub fn draw_truth<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            FamilySpec::Rps { context_dim } => {
                DVector::from_fn(3 * context_dim, |_, _| rng.random::<f64>() * 10.0)
            }
            FamilySpec::Poker { cards } => {
                // Dir(1, ..., 1): normalized unit exponentials.
                let gammas: Vec<f64> = (0..*cards)
                    .map(|_| -(1.0 - rng.random::<f64>()).ln())
                    .collect();
                let total: f64 = gammas.iter().sum();
                DVector::from_iterator(*cards, gammas.iter().map(|g| (g / total).ln()))
            }
            FamilySpec::Security { targets, .. } => DVector::from_fn(*targets, |_, _| {
                let r = rng.random::<f64>() * 2.0;
                (r - 1.0).atanh()
            }),
        }
    }

    /// Draws one context vector (uniform in [0, 1] per feature) for
    /// contextual families, `None` otherwise.
    pub fn draw_context<R: Rng>(&self, rng: &mut R) -> Option<DVector<f64>> {
        match self {
            FamilySpec::Rps { context_dim } => {
                Some(DVector::from_fn(*context_dim, |_, _| rng.random::<f64>()))
            }
            _ => None,
        }
    }

    fn check_param_len(&self, raw: &DVector<f64>) -> Result<(), BuildError> {
        if raw.len() != self.param_dim() {
            return Err(BuildError::ShapeMismatch(format!(
                "{} parameters for family {} (expected {})",
                raw.len(),
                self.name(),
                self.param_dim()
            )));
        }
        Ok(())
    }

    fn required_context<'a>(
        &self,
        context: Option<&'a DVector<f64>>,
        dim: usize,
    ) -> Result<&'a DVector<f64>, BuildError> {
        match context {
            Some(x) if x.len() == dim => Ok(x),
            Some(x) => Err(BuildError::ShapeMismatch(format!(
                "context of length {} for context_dim {}",
                x.len(),
                dim
            ))),
            None => Err(BuildError::ShapeMismatch(
                "rps requires a context vector".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn build_routes_and_shapes() {
        let rps = FamilySpec::Rps { context_dim: 2 };
        let built = rps
            .build(
                &dvector![1.0, 0.5, 2.0, 0.1, 0.3, 0.9],
                Some(&dvector![0.2, 0.8]),
            )
            .unwrap();
        assert!(built.is_normal_shaped());
        assert_eq!(built.game.payoff.matrix().shape(), (3, 3));

        let poker = FamilySpec::Poker { cards: 4 };
        let built = poker.build(&DVector::zeros(4), None).unwrap();
        assert!(!built.is_normal_shaped());
        assert_eq!(built.game.payoff.matrix().shape(), (16, 16));

        let sec = FamilySpec::Security {
            targets: 2,
            resources: 5,
            stages: 2,
        };
        let built = sec.build(&DVector::zeros(2), None).unwrap();
        assert_eq!(built.game.payoff.matrix().shape(), (10, 6));
    }

    #[test]
    fn missing_context_is_an_error() {
        let rps = FamilySpec::Rps { context_dim: 2 };
        assert!(matches!(
            rps.build(&DVector::zeros(6), None),
            Err(BuildError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn natural_params_round_trip() {
        let poker = FamilySpec::Poker { cards: 4 };
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let raw = poker.draw_truth(&mut rng);
        let d = poker.natural_params(&raw);
        assert!((d.sum() - 1.0).abs() < 1e-12);
        let back = poker.natural_params(&poker.raw_from_natural(&d));
        assert!((back - d).amax() < 1e-12);

        let sec = FamilySpec::Security {
            targets: 3,
            resources: 2,
            stages: 1,
        };
        let raw = sec.draw_truth(&mut rng);
        let r = sec.natural_params(&raw);
        assert!(r.iter().all(|x| *x > 0.0 && *x < 2.0));
        assert!((sec.natural_params(&sec.raw_from_natural(&r)) - &r).amax() < 1e-12);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let poker = FamilySpec::Poker { cards: 3 };
        let g = poker
            .payoff_vjp(&DVector::zeros(3), None, &DMatrix::zeros(12, 12))
            .unwrap();
        assert_eq!(g.amax(), 0.0);

        let sec = FamilySpec::Security {
            targets: 2,
            resources: 3,
            stages: 2,
        };
        let g = sec
            .payoff_vjp(&dvector![0.1, -0.4], None, &DMatrix::zeros(10, 4))
            .unwrap();
        assert_eq!(g.amax(), 0.0);
    }

    #[test]
    fn playout_probabilities_sum_to_one() {
        use crate::game::{Player, uniform_realization_plan};
        for spec in [
            FamilySpec::Rps { context_dim: 1 },
            FamilySpec::Poker { cards: 3 },
            FamilySpec::Security {
                targets: 2,
                resources: 2,
                stages: 2,
            },
        ] {
            let raw = DVector::from_element(spec.param_dim(), 0.2);
            let ctx = dvector![1.0];
            let built = spec
                .build(&raw, spec.is_contextual().then_some(&ctx))
                .unwrap();
            let u = uniform_realization_plan(&built.game.row_treeplex, Player::Row);
            let v = uniform_realization_plan(&built.game.col_treeplex, Player::Col);
            let total: f64 = enumerate_playouts(&built, &u, &v)
                .iter()
                .map(|p| p.prob)
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "family {}", spec.name());
        }
    }

    #[test]
    fn vjp_matches_directional_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for spec in [
            FamilySpec::Rps { context_dim: 2 },
            FamilySpec::Poker { cards: 4 },
            FamilySpec::Security {
                targets: 2,
                resources: 3,
                stages: 1,
            },
            FamilySpec::Security {
                targets: 2,
                resources: 2,
                stages: 2,
            },
        ] {
            let dim = spec.param_dim();
            let theta = DVector::from_fn(dim, |_, _| rng.random::<f64>() - 0.5);
            let context = spec.draw_context(&mut rng);
            let built = spec.build(&theta, context.as_ref()).unwrap();
            let (rows, cols) = built.game.payoff.matrix().shape();
            let upstream = DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() - 0.5);
            let grad = spec
                .payoff_vjp(&theta, context.as_ref(), &upstream)
                .unwrap();

            let delta = DVector::from_fn(dim, |_, _| rng.random::<f64>() - 0.5);
            // P is linear in the rps weights, so a unit step differences it
            // exactly; the other families need a small finite-difference
            // step and a correspondingly looser tolerance.
            let (h, tol) = if matches!(spec, FamilySpec::Rps { .. }) {
                (1.0, 1e-10)
            } else {
                (1e-6, 1e-6)
            };
            let lp = spec
                .build(&(&theta + h * &delta), context.as_ref())
                .unwrap();
            let lm = spec
                .build(&(&theta - h * &delta), context.as_ref())
                .unwrap();
            let dp = (lp.game.payoff.matrix() - lm.game.payoff.matrix()) / (2.0 * h);
            let lhs = dp.dot(&upstream);
            let rhs = delta.dot(&grad);
            let scale = lhs.abs().max(rhs.abs()).max(1e-10);
            assert!(
                (lhs - rhs).abs() / scale < tol,
                "family {}: {lhs:e} vs {rhs:e}",
                spec.name()
            );
        }
    }
}
