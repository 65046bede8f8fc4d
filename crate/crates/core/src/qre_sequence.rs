//! Logit QRE solver for zero-sum games in sequence form.
//!
//! The regularized saddle-point problem is
//!
//! ```text
//! min_u max_v  uᵀPv + Ψ(u) - Ψ(v)   s.t.  Eu = e, Fv = f,
//! ```
//!
//! where `Ψ` is the dilated entropy over the player's treeplex. Its solution
//! is realization equivalent to the logit QRE of the reduced normal form,
//! which is what the oracle tests check. The Newton system couples the
//! entropy Hessian blocks `Ξ` with the flow constraints:
//!
//! ```text
//! [ -Ξ(u)   P     Eᵀ   0  ]
//! [  Pᵀ     Ξ(v)  0    Fᵀ ]
//! [  E      0     0    0  ]
//! [  0      F     0    0  ]
//! ```
//!
//! With a single info set per player everything degenerates exactly to the
//! normal-form module.

use crate::error::{GameError, SolveError};
use crate::game::{Player, RealizationPlan, SequenceFormGame, Treeplex, uniform_realization_plan};
use crate::numeric::{fraction_to_boundary, inf_norm, safe_ln};
use crate::qre_normal::{IterationRecord, SolverOptions};
use nalgebra::{DMatrix, DVector, Dyn};

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-13;

/// Sequence-form saddle point: realization plans plus one multiplier per
/// info set, ordered like the rows of `E` and `F`.
#[derive(Debug, Clone)]
pub struct SeqQreSolution {
    pub u: RealizationPlan,
    pub v: RealizationPlan,
    pub mu: DVector<f64>,
    pub nu: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
}

/// Dilated entropy `Σ_i Σ_{a ∈ A_i} plan_a log(plan_a / plan_parent)` with
/// the convention `0 log 0 = 0`, so 0/1 plans evaluate to zero.
pub fn dilated_entropy(plan: &RealizationPlan, tp: &Treeplex) -> Result<f64, GameError> {
    if let Some(i) = plan.values.iter().position(|x| *x < 0.0) {
        return Err(GameError::NonPositivePlan { index: i });
    }
    let mut total = 0.0;
    for set in tp.info_sets() {
        let parent = match set.parent {
            Some(p) => plan.values[p],
            None => 1.0,
        };
        for &a in &set.actions {
            let x = plan.values[a];
            if x > 0.0 {
                total += x * (x.ln() - safe_ln(parent));
            }
        }
    }
    Ok(total)
}

/// The matrix `Ξ(plan)`: negated Hessian of the dilated entropy at a
/// flow-feasible point.
///
/// `Ξ_aa = -(1 + J_a)/x_a`; `Ξ_ab = Ξ_ba = 1/x_b` when `b` is the parent
/// sequence of `a`. Always symmetric.
pub fn xi_blocks(plan: &RealizationPlan, tp: &Treeplex) -> DMatrix<f64> {
    let n = tp.num_sequences();
    let x = &plan.values;
    let mut xi = DMatrix::zeros(n, n);
    for a in 0..n {
        xi[(a, a)] = -((1 + tp.child_count(a)) as f64) / x[a];
        if let Some(b) = tp.parent_of(a) {
            let off = 1.0 / x[b];
            xi[(a, b)] = off;
            xi[(b, a)] = off;
        }
    }
    xi
}

/// Sequence-form KKT residual, stacked as `(g_u; g_v; Eu - e; Fv - f)`:
///
/// ```text
/// g_u[a]  = (Pv)_a  + 1 + log u_a  - log u_parent  - J_a  + (Eᵀμ)_a
/// g_v[a'] = (Pᵀu)_a' - 1 - log v_a' + log v_parent + J_a' + (Fᵀν)_a'
/// ```
///
/// The multiplier sign follows the Newton matrix above (its `Eᵀ`/`Fᵀ`
/// blocks are the exact Jacobian of these rows), which makes the one-info-
/// set case coincide with [`crate::qre_normal::kkt_residual`] exactly.
pub fn sequence_kkt_residual(
    game: &SequenceFormGame,
    u: &RealizationPlan,
    v: &RealizationPlan,
    mu: &DVector<f64>,
    nu: &DVector<f64>,
) -> Result<DVector<f64>, SolveError> {
    check_dims(game, u, v, mu, nu)?;
    if u.values.iter().chain(v.values.iter()).any(|x| *x <= 0.0) {
        return Err(SolveError::NonPositiveStrategy);
    }
    Ok(residual_unchecked(game, &u.values, &v.values, mu, nu))
}

fn residual_unchecked(
    game: &SequenceFormGame,
    u: &DVector<f64>,
    v: &DVector<f64>,
    mu: &DVector<f64>,
    nu: &DVector<f64>,
) -> DVector<f64> {
    let p = game.payoff.matrix();
    let (n, m) = (p.nrows(), p.ncols());
    let (tp_u, tp_v) = (&game.row_treeplex, &game.col_treeplex);
    let (e, f) = (&game.row_constraints, &game.col_constraints);
    let ni = e.matrix.nrows();
    let mi = f.matrix.nrows();

    let pv = p * v;
    let ptu = p.transpose() * u;
    let et_mu = e.matrix.transpose() * mu;
    let ft_nu = f.matrix.transpose() * nu;

    let mut g = DVector::zeros(n + m + ni + mi);
    for a in 0..n {
        let parent = match tp_u.parent_of(a) {
            Some(pa) => safe_ln(u[pa]),
            None => 0.0,
        };
        g[a] = pv[a] + 1.0 + safe_ln(u[a]) - parent - tp_u.child_count(a) as f64 + et_mu[a];
    }
    for a in 0..m {
        let parent = match tp_v.parent_of(a) {
            Some(pa) => safe_ln(v[pa]),
            None => 0.0,
        };
        g[n + a] = ptu[a] - 1.0 - safe_ln(v[a]) + parent + tp_v.child_count(a) as f64 + ft_nu[a];
    }
    g.rows_mut(n + m, ni).copy_from(&(&e.matrix * u - &e.rhs));
    g.rows_mut(n + m + ni, mi)
        .copy_from(&(&f.matrix * v - &f.rhs));
    g
}

/// Assembles the symmetric sequence-form Newton/KKT matrix at `(u, v)`.
pub fn newton_matrix(
    game: &SequenceFormGame,
    u: &RealizationPlan,
    v: &RealizationPlan,
) -> DMatrix<f64> {
    let p = game.payoff.matrix();
    let (n, m) = (p.nrows(), p.ncols());
    let e = &game.row_constraints.matrix;
    let f = &game.col_constraints.matrix;
    let (ni, mi) = (e.nrows(), f.nrows());
    let dim = n + m + ni + mi;

    let mut k = DMatrix::zeros(dim, dim);
    k.view_mut((0, 0), (n, n))
        .copy_from(&(-xi_blocks(u, &game.row_treeplex)));
    k.view_mut((0, n), (n, m)).copy_from(p);
    k.view_mut((n, 0), (m, n)).copy_from(&p.transpose());
    k.view_mut((n, n), (m, m))
        .copy_from(&xi_blocks(v, &game.col_treeplex));
    k.view_mut((0, n + m), (n, ni)).copy_from(&e.transpose());
    k.view_mut((n + m, 0), (ni, n)).copy_from(e);
    k.view_mut((n, n + m + ni), (m, mi))
        .copy_from(&f.transpose());
    k.view_mut((n + m + ni, n), (mi, m)).copy_from(f);
    k
}

/// Solves for the dilated-entropy QRE of a validated sequence-form game.
pub fn solve_sequence(
    game: &SequenceFormGame,
    opts: &SolverOptions,
) -> Result<SeqQreSolution, SolveError> {
    let p = game.payoff.matrix();
    let (n, m) = (p.nrows(), p.ncols());
    let ni = game.row_constraints.matrix.nrows();
    let mi = game.col_constraints.matrix.nrows();

    let mut u = uniform_realization_plan(&game.row_treeplex, Player::Row);
    let mut v = uniform_realization_plan(&game.col_treeplex, Player::Col);
    let mut mu = DVector::zeros(ni);
    let mut nu = DVector::zeros(mi);
    let mut history = Vec::new();

    let mut g = residual_unchecked(game, &u.values, &v.values, &mu, &nu);
    for iter in 0..=opts.max_iters {
        let res = inf_norm(&g);
        if res <= opts.tol {
            return Ok(SeqQreSolution {
                u,
                v,
                mu,
                nu,
                residual: res,
                iterations: iter,
                history,
            });
        }
        if iter == opts.max_iters {
            break;
        }

        let k = newton_matrix(game, &u, &v);
        let delta = k.lu().solve(&(-&g)).ok_or(SolveError::NumericalBreakdown(
            "singular Newton system".into(),
        ))?;
        let du = delta.rows(0, n).into_owned();
        let dv = delta.rows(n, m).into_owned();
        let dmu = delta.rows(n + m, ni).into_owned();
        let dnu = delta.rows(n + m + ni, mi).into_owned();

        let alpha_max = fraction_to_boundary(&u.values, &du, opts.boundary_fraction)
            .min(fraction_to_boundary(&v.values, &dv, opts.boundary_fraction));

        let g_sq = g.norm_squared();
        let mut alpha = alpha_max;
        let mut accepted = None;
        while alpha >= MIN_STEP {
            let u_t = &u.values + alpha * &du;
            let v_t = &v.values + alpha * &dv;
            let g_t = residual_unchecked(
                game,
                &u_t,
                &v_t,
                &(&mu + alpha * &dmu),
                &(&nu + alpha * &dnu),
            );
            if g_t.norm_squared() <= (1.0 - 2.0 * ARMIJO_C * alpha) * g_sq {
                accepted = Some((u_t, v_t, g_t));
                break;
            }
            alpha *= 0.5;
        }
        let Some((u_t, v_t, g_t)) = accepted else {
            return Err(SolveError::NumericalBreakdown("line search stalled".into()));
        };
        u.values = u_t;
        v.values = v_t;
        mu += alpha * &dmu;
        nu += alpha * &dnu;
        g = g_t;
        history.push(IterationRecord {
            residual: inf_norm(&g),
            constraint_violation: u
                .flow_violation(&game.row_constraints)
                .max(v.flow_violation(&game.col_constraints)),
            step: alpha,
        });
    }

    Err(SolveError::MaxItersExceeded {
        residual: inf_norm(&g),
        iterations: opts.max_iters,
        u: u.values.iter().copied().collect(),
        v: v.values.iter().copied().collect(),
    })
}

/// Cached factorization of the sequence-form KKT matrix at a solution.
pub struct SequenceBackward {
    lu: nalgebra::LU<f64, Dyn, Dyn>,
    u: DVector<f64>,
    v: DVector<f64>,
    multipliers: usize,
}

impl SequenceBackward {
    pub fn new(game: &SequenceFormGame, u: &RealizationPlan, v: &RealizationPlan) -> Self {
        let k = newton_matrix(game, u, v);
        Self {
            lu: k.lu(),
            u: u.values.clone(),
            v: v.values.clone(),
            multipliers: game.row_constraints.matrix.nrows() + game.col_constraints.matrix.nrows(),
        }
    }

    /// Solves the KKT system against `(-grad_u; -grad_v; 0; 0)` and returns
    /// `∇_P L = y_u vᵀ + u y_vᵀ`.
    pub fn grad_payoff(
        &self,
        grad_u: &DVector<f64>,
        grad_v: &DVector<f64>,
    ) -> Result<DMatrix<f64>, SolveError> {
        let (n, m) = (self.u.len(), self.v.len());
        if grad_u.len() != n || grad_v.len() != m {
            return Err(SolveError::DimensionMismatch(format!(
                "upstream gradients of length {} and {} for a {}x{} game",
                grad_u.len(),
                grad_v.len(),
                n,
                m
            )));
        }
        let mut rhs = DVector::zeros(n + m + self.multipliers);
        rhs.rows_mut(0, n).copy_from(&(-grad_u));
        rhs.rows_mut(n, m).copy_from(&(-grad_v));
        let y = self.lu.solve(&rhs).ok_or(SolveError::SingularSystem)?;
        let y_u = y.rows(0, n);
        let y_v = y.rows(n, m);
        Ok(y_u * self.v.transpose() + &self.u * y_v.transpose())
    }
}

/// Gradient of a loss on the realization plans with respect to the payoff
/// matrix.
pub fn backward_sequence(
    game: &SequenceFormGame,
    sol: &SeqQreSolution,
    grad_u: &DVector<f64>,
    grad_v: &DVector<f64>,
) -> Result<DMatrix<f64>, SolveError> {
    SequenceBackward::new(game, &sol.u, &sol.v).grad_payoff(grad_u, grad_v)
}

fn check_dims(
    game: &SequenceFormGame,
    u: &RealizationPlan,
    v: &RealizationPlan,
    mu: &DVector<f64>,
    nu: &DVector<f64>,
) -> Result<(), SolveError> {
    if u.len() != game.payoff.rows()
        || v.len() != game.payoff.cols()
        || mu.len() != game.row_constraints.matrix.nrows()
        || nu.len() != game.col_constraints.matrix.nrows()
    {
        return Err(SolveError::DimensionMismatch(
            "plan or multiplier length does not match the game".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{InfoSet, PayoffMatrix, behavioral_from_realization};
    use crate::qre_normal;
    use nalgebra::dvector;

    fn poker_like_game(n: usize) -> SequenceFormGame {
        let row = crate::game::tests::poker_row_treeplex(n);
        let col = crate::game::tests::poker_col_treeplex(n);
        let dim = 4 * n;
        let entries: Vec<f64> = (0..dim * dim)
            .map(|i| (((i * 31 + 7) % 13) as f64 - 6.0) * 0.2)
            .collect();
        let payoff = PayoffMatrix::new(DMatrix::from_row_slice(dim, dim, &entries)).unwrap();
        SequenceFormGame::new(payoff, row, col).unwrap()
    }

    fn wrapped_normal() -> (PayoffMatrix, SequenceFormGame) {
        let p = PayoffMatrix::new(DMatrix::from_row_slice(
            3,
            4,
            &[
                2.1, -3.0, 0.4, 1.2, -0.5, 4.0, -2.2, 0.1, 3.3, -1.0, 0.0, 2.5,
            ],
        ))
        .unwrap();
        let game = crate::game::NormalFormGame::new(p.clone()).to_sequence_form();
        (p, game)
    }

    #[test]
    fn dilated_entropy_of_uniform_pair_is_minus_ln2() {
        let tp = Treeplex::single_info_set(2);
        let plan = RealizationPlan::new(dvector![0.5, 0.5], Player::Row);
        let h = dilated_entropy(&plan, &tp).unwrap();
        assert!((h + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn dilated_entropy_of_pure_plan_is_zero() {
        let tp = crate::game::tests::poker_row_treeplex(2);
        let plan = RealizationPlan::new(
            DVector::from_vec(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0]),
            Player::Row,
        );
        assert_eq!(dilated_entropy(&plan, &tp).unwrap(), 0.0);
    }

    #[test]
    fn dilated_entropy_rejects_negative_plans() {
        let tp = Treeplex::single_info_set(2);
        let plan = RealizationPlan::new(dvector![1.5, -0.5], Player::Row);
        assert!(matches!(
            dilated_entropy(&plan, &tp),
            Err(GameError::NonPositivePlan { index: 1 })
        ));
    }

    #[test]
    fn dilated_entropy_equals_negated_mixture_entropy() {
        // For the poker treeplex under uniform behavioral play, the dilated
        // entropy equals Σ w log w over the induced reduced-normal-form
        // mixture weights.
        let game = poker_like_game(2);
        let tp = &game.row_treeplex;
        let plan = uniform_realization_plan(tp, Player::Row);
        let dilated = dilated_entropy(&plan, tp).unwrap();

        let sigma = behavioral_from_realization(&plan, tp);
        let strategies = game.reduced_normal_form(Player::Row, 4096).unwrap();
        let mut mixture_entropy = 0.0;
        for s in &strategies {
            let w: f64 = s.choices.iter().map(|&(_, a)| sigma[a]).product();
            mixture_entropy += w * w.ln();
        }
        assert!((dilated - mixture_entropy).abs() < 1e-12);
    }

    #[test]
    fn xi_on_a_simplex_is_minus_inverse_diag() {
        let tp = Treeplex::single_info_set(3);
        let plan = RealizationPlan::new(dvector![0.2, 0.5, 0.3], Player::Row);
        let xi = xi_blocks(&plan, &tp);
        let expected = DMatrix::from_diagonal(&dvector![-5.0, -2.0, -10.0 / 3.0]);
        assert!((xi - expected).amax() < 1e-12);
    }

    #[test]
    fn xi_diagonal_counts_child_info_sets() {
        let tp = crate::game::tests::poker_row_treeplex(2);
        let plan = uniform_realization_plan(&tp, Player::Row);
        let xi = xi_blocks(&plan, &tp);
        // check_0 (sequence 0) has one child info set: -(1+1)/0.5 = -4.
        assert_eq!(xi[(0, 0)], -4.0);
        // bet_0 (sequence 2) is a leaf: -1/0.5 = -2.
        assert_eq!(xi[(2, 2)], -2.0);
        assert_eq!(xi, xi.transpose());
    }

    #[test]
    fn xi_matches_finite_difference_hessian_of_dilated_entropy() {
        let tp = crate::game::tests::poker_row_treeplex(2);
        // A feasible interior, non-uniform plan. Info sets are {0,2}, {1,3}
        // at the root and {4,6}, {5,7} below sequences 0 and 1.
        let mut sigma = DVector::zeros(8);
        sigma[0] = 0.3;
        sigma[2] = 0.7;
        sigma[1] = 0.6;
        sigma[3] = 0.4;
        sigma[4] = 0.25;
        sigma[6] = 0.75;
        sigma[5] = 0.8;
        sigma[7] = 0.2;
        let plan = crate::game::realization_from_behavioral(&sigma, &tp, Player::Row).unwrap();
        let xi = xi_blocks(&plan, &tp);

        let h = 1e-5;
        let psi = |values: &DVector<f64>| {
            dilated_entropy(&RealizationPlan::new(values.clone(), Player::Row), &tp).unwrap()
        };
        for a in 0..8 {
            for b in 0..8 {
                let mut pp = plan.values.clone();
                let mut pm = plan.values.clone();
                let mut mp = plan.values.clone();
                let mut mm = plan.values.clone();
                pp[a] += h;
                pp[b] += h;
                pm[a] += h;
                pm[b] -= h;
                mp[a] -= h;
                mp[b] += h;
                mm[a] -= h;
                mm[b] -= h;
                let fd = (psi(&pp) - psi(&pm) - psi(&mp) + psi(&mm)) / (4.0 * h * h);
                let analytic = -xi[(a, b)];
                assert!(
                    (analytic - fd).abs() <= 1e-5 * analytic.abs().max(1.0),
                    "entry ({a},{b}): -xi {analytic:e} vs fd {fd:e}"
                );
            }
        }
    }

    #[test]
    fn residual_degenerates_to_normal_form() {
        let (p, game) = wrapped_normal();
        let u = dvector![0.2, 0.5, 0.3];
        let v = dvector![0.1, 0.2, 0.3, 0.4];
        let (mu, nu) = (0.37, -1.42);
        let seq = sequence_kkt_residual(
            &game,
            &RealizationPlan::new(u.clone(), Player::Row),
            &RealizationPlan::new(v.clone(), Player::Col),
            &dvector![mu],
            &dvector![nu],
        )
        .unwrap();
        let normal = qre_normal::kkt_residual(&p, &u, &v, mu, nu).unwrap();
        assert!((seq - normal).amax() < 1e-14);
    }

    #[test]
    fn newton_matrix_degenerates_to_normal_form() {
        let (p, game) = wrapped_normal();
        let u = RealizationPlan::new(dvector![0.2, 0.5, 0.3], Player::Row);
        let v = RealizationPlan::new(dvector![0.1, 0.2, 0.3, 0.4], Player::Col);
        let k = newton_matrix(&game, &u, &v);
        let q = qre_normal::newton_matrix(p.matrix(), &u.values, &v.values);
        assert_eq!(k, q);
    }

    #[test]
    fn newton_matrix_is_symmetric() {
        let game = poker_like_game(2);
        let u = uniform_realization_plan(&game.row_treeplex, Player::Row);
        let v = uniform_realization_plan(&game.col_treeplex, Player::Col);
        let k = newton_matrix(&game, &u, &v);
        assert_eq!(k, k.transpose());
    }

    #[test]
    fn solving_a_wrapped_normal_game_matches_solve_normal() {
        let (p, game) = wrapped_normal();
        let opts = SolverOptions::default();
        let seq = solve_sequence(&game, &opts).unwrap();
        let normal = qre_normal::solve_normal(&p, &opts).unwrap();
        assert!((seq.u.values - normal.u).amax() < 1e-9);
        assert!((seq.v.values - normal.v).amax() < 1e-9);
    }

    #[test]
    fn solve_reaches_tolerance_and_stays_feasible() {
        let game = poker_like_game(2);
        let sol = solve_sequence(&game, &SolverOptions::default()).unwrap();
        assert!(sol.residual <= 1e-10);
        let g = sequence_kkt_residual(&game, &sol.u, &sol.v, &sol.mu, &sol.nu).unwrap();
        assert!(inf_norm(&g) <= 1e-10);
        for rec in &sol.history {
            assert!(rec.constraint_violation <= 1e-9);
        }
        let mut prev = f64::INFINITY;
        for rec in &sol.history {
            assert!(rec.residual < prev);
            prev = rec.residual;
        }
    }

    #[test]
    fn residual_is_sensitive_to_plan_perturbations() {
        let game = poker_like_game(2);
        let sol = solve_sequence(&game, &SolverOptions::default()).unwrap();
        let mut u = sol.u.clone();
        let a = 3;
        u.values[a] += 1e-3;
        let g = sequence_kkt_residual(&game, &u, &sol.v, &sol.mu, &sol.nu).unwrap();
        // The stationarity row for the perturbed sequence moves by
        // Θ(1e-3 / u_a).
        let expected = 1e-3 / sol.u.values[a];
        assert!(g[a].abs() > 0.1 * expected);
        assert!(g[a].abs() < 10.0 * expected);
    }

    #[test]
    fn backward_with_zero_gradients_is_zero() {
        let game = poker_like_game(2);
        let sol = solve_sequence(&game, &SolverOptions::default()).unwrap();
        let g = backward_sequence(&game, &sol, &DVector::zeros(8), &DVector::zeros(8)).unwrap();
        assert_eq!(g.amax(), 0.0);
    }

    #[test]
    fn backward_degenerates_to_normal_form() {
        let (p, game) = wrapped_normal();
        let opts = SolverOptions::default();
        let seq = solve_sequence(&game, &opts).unwrap();
        let normal = qre_normal::solve_normal(&p, &opts).unwrap();

        let grad_u = dvector![0.3, -1.2, 0.9];
        let grad_v = dvector![-0.4, 0.0, 2.0, -1.1];
        let gs = backward_sequence(&game, &seq, &grad_u, &grad_v).unwrap();
        let gn = qre_normal::backward_normal(&p, &normal, &grad_u, &grad_v).unwrap();
        assert!((gs - gn).amax() < 1e-9);
    }

    #[test]
    fn one_action_info_sets_are_handled() {
        // A degenerate chain: one action, then one more info set below it.
        let tp = Treeplex::new(
            vec![
                InfoSet {
                    actions: vec![0],
                    parent: None,
                },
                InfoSet {
                    actions: vec![1, 2],
                    parent: Some(0),
                },
            ],
            3,
        )
        .unwrap();
        let payoff = PayoffMatrix::new(DMatrix::from_row_slice(
            3,
            2,
            &[0.0, 0.0, 1.0, -1.0, -1.0, 1.0],
        ))
        .unwrap();
        let game = SequenceFormGame::new(payoff, tp, Treeplex::single_info_set(2)).unwrap();
        let sol = solve_sequence(&game, &SolverOptions::default()).unwrap();
        assert!((sol.u.values[0] - 1.0).abs() < 1e-9);
        assert!(sol.residual <= 1e-10);
    }
}
