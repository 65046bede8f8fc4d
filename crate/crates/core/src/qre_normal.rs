//! Logit QRE solver for zero-sum normal-form games.
//!
//! The equilibrium is the unique saddle point of
//!
//! ```text
//! min_u max_v  uᵀPv + H(u) - H(v),   H(y) = Σ y_i log y_i,
//! ```
//!
//! over the probability simplices, equivalently the fixed point
//! `u = softmax(-Pv)`, `v = softmax(Pᵀu)`. It is computed by a primal-dual
//! Newton method on the KKT system, and [`backward_normal`] solves the same
//! (symmetric) system once more to backpropagate a loss on `(u, v)` to the
//! payoff matrix.

use crate::error::SolveError;
use crate::game::PayoffMatrix;
use crate::numeric::{fraction_to_boundary, inf_norm, safe_ln, softmax};
use nalgebra::{DMatrix, DVector, Dyn};

/// Rationality parameter of the logit response; fixed.
pub const LAMBDA: f64 = 1.0;

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-13;
const MAX_RESTARTS: usize = 3;

/// Options shared by the normal-form and sequence-form solvers.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Convergence threshold on the KKT residual infinity norm.
    pub tol: f64,
    pub max_iters: usize,
    /// Fraction-to-boundary factor keeping iterates strictly positive.
    pub boundary_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 200,
            boundary_fraction: 0.9,
        }
    }
}

/// Per-iteration solver diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    /// KKT residual infinity norm after the accepted step.
    pub residual: f64,
    /// Equality-constraint violation after the accepted step.
    pub constraint_violation: f64,
    /// Accepted step length.
    pub step: f64,
}

/// Saddle point of the regularized game plus its Lagrange multipliers.
#[derive(Debug, Clone)]
pub struct QreSolution {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub mu: f64,
    pub nu: f64,
    /// Final KKT residual infinity norm.
    pub residual: f64,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
}

/// KKT residual, stacked as
/// `(Pv + log u + 1 + mu; Pᵀu - log v - 1 + nu; 1ᵀu - 1; 1ᵀv - 1)`.
pub fn kkt_residual(
    payoff: &PayoffMatrix,
    u: &DVector<f64>,
    v: &DVector<f64>,
    mu: f64,
    nu: f64,
) -> Result<DVector<f64>, SolveError> {
    check_dims(payoff, u, v)?;
    if u.iter().chain(v.iter()).any(|x| *x <= 0.0) {
        return Err(SolveError::NonPositiveStrategy);
    }
    Ok(kkt_residual_unchecked(payoff.matrix(), u, v, mu, nu))
}

fn kkt_residual_unchecked(
    p: &DMatrix<f64>,
    u: &DVector<f64>,
    v: &DVector<f64>,
    mu: f64,
    nu: f64,
) -> DVector<f64> {
    let (n, m) = (p.nrows(), p.ncols());
    let mut g = DVector::zeros(n + m + 2);
    let pv = p * v;
    let ptu = p.transpose() * u;
    for i in 0..n {
        g[i] = pv[i] + safe_ln(u[i]) + 1.0 + mu;
    }
    for j in 0..m {
        g[n + j] = ptu[j] - safe_ln(v[j]) - 1.0 + nu;
    }
    g[n + m] = u.sum() - 1.0;
    g[n + m + 1] = v.sum() - 1.0;
    g
}

/// The symmetric Newton/KKT matrix
/// `[[diag(1/u), P, 1, 0], [Pᵀ, -diag(1/v), 0, 1], [1ᵀ, 0, 0, 0], [0, 1ᵀ, 0, 0]]`.
pub fn newton_matrix(p: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let (n, m) = (p.nrows(), p.ncols());
    let dim = n + m + 2;
    let mut q = DMatrix::zeros(dim, dim);
    for i in 0..n {
        q[(i, i)] = 1.0 / u[i];
        q[(i, n + m)] = 1.0;
        q[(n + m, i)] = 1.0;
    }
    for j in 0..m {
        q[(n + j, n + j)] = -1.0 / v[j];
        q[(n + j, n + m + 1)] = 1.0;
        q[(n + m + 1, n + j)] = 1.0;
    }
    q.view_mut((0, n), (n, m)).copy_from(p);
    q.view_mut((n, 0), (m, n)).copy_from(&p.transpose());
    q
}

/// Infinity norm of `(u - softmax(-Pv), v - softmax(Pᵀu))`: how far the
/// pair is from the logit fixed point.
pub fn fixed_point_residual(payoff: &PayoffMatrix, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let p = payoff.matrix();
    let ru = u - softmax(&(-(p * v)));
    let rv = v - softmax(&(p.transpose() * u));
    inf_norm(&ru).max(inf_norm(&rv))
}

/// Solves for the logit QRE of `payoff`. Deterministic for fixed inputs.
pub fn solve_normal(
    payoff: &PayoffMatrix,
    opts: &SolverOptions,
) -> Result<QreSolution, SolveError> {
    let p = payoff.matrix();
    let (n, m) = (p.nrows(), p.ncols());
    let mut u = DVector::from_element(n, 1.0 / n as f64);
    let mut v = DVector::from_element(m, 1.0 / m as f64);
    let mut mu = 0.0;
    let mut nu = 0.0;
    let mut history = Vec::new();
    let mut restarts = 0;

    let mut g = kkt_residual_unchecked(p, &u, &v, mu, nu);
    for iter in 0..=opts.max_iters {
        let res = inf_norm(&g);
        if res <= opts.tol {
            return Ok(QreSolution {
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

        let q = newton_matrix(p, &u, &v);
        let delta = q.lu().solve(&(-&g)).ok_or(SolveError::NumericalBreakdown(
            "singular Newton system".into(),
        ))?;
        let du = delta.rows(0, n).into_owned();
        let dv = delta.rows(n, m).into_owned();
        let dmu = delta[n + m];
        let dnu = delta[n + m + 1];

        let alpha_max = fraction_to_boundary(&u, &du, opts.boundary_fraction)
            .min(fraction_to_boundary(&v, &dv, opts.boundary_fraction));

        // Backtracking Armijo line search on the squared residual norm.
        let g_sq = g.norm_squared();
        let mut alpha = alpha_max;
        let accepted = loop {
            if alpha < MIN_STEP {
                break None;
            }
            let u_t = &u + alpha * &du;
            let v_t = &v + alpha * &dv;
            let g_t = kkt_residual_unchecked(p, &u_t, &v_t, mu + alpha * dmu, nu + alpha * dnu);
            if g_t.norm_squared() <= (1.0 - 2.0 * ARMIJO_C * alpha) * g_sq {
                break Some((u_t, v_t, g_t));
            }
            alpha *= 0.5;
        };

        match accepted {
            Some((u_t, v_t, g_t)) => {
                u = u_t;
                v = v_t;
                mu += alpha * dmu;
                nu += alpha * dnu;
                g = g_t;
                history.push(IterationRecord {
                    residual: inf_norm(&g),
                    constraint_violation: (u.sum() - 1.0).abs().max((v.sum() - 1.0).abs()),
                    step: alpha,
                });
            }
            None => {
                // Line-search stall: re-enter Newton's basin via a damped
                // fixed-point pass, which is globally stable for this game.
                restarts += 1;
                if restarts > MAX_RESTARTS {
                    return Err(SolveError::NumericalBreakdown(
                        "line search stalled repeatedly".into(),
                    ));
                }
                for _ in 0..50 {
                    let bu = softmax(&(-(p * &v)));
                    let bv = softmax(&(p.transpose() * &u));
                    u = 0.5 * &u + 0.5 * bu;
                    v = 0.5 * &v + 0.5 * bv;
                }
                // Least-squares multipliers for the new primal point.
                mu = -(p * &v + u.map(safe_ln)).add_scalar(1.0).mean();
                nu = (v.map(safe_ln) - p.transpose() * &u).add_scalar(1.0).mean();
                g = kkt_residual_unchecked(p, &u, &v, mu, nu);
            }
        }
    }

    Err(SolveError::MaxItersExceeded {
        residual: inf_norm(&g),
        iterations: opts.max_iters,
        u: u.iter().copied().collect(),
        v: v.iter().copied().collect(),
    })
}

/// Cached factorization of the KKT matrix at a solution, reusable across
/// many backward passes for the same equilibrium.
pub struct NormalBackward {
    lu: nalgebra::LU<f64, Dyn, Dyn>,
    u: DVector<f64>,
    v: DVector<f64>,
}

impl NormalBackward {
    pub fn new(payoff: &PayoffMatrix, u: &DVector<f64>, v: &DVector<f64>) -> Self {
        let q = newton_matrix(payoff.matrix(), u, v);
        Self {
            lu: q.lu(),
            u: u.clone(),
            v: v.clone(),
        }
    }

    /// Solves `Q y = (-grad_u; -grad_v; 0; 0)` and returns
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
        let mut rhs = DVector::zeros(n + m + 2);
        rhs.rows_mut(0, n).copy_from(&(-grad_u));
        rhs.rows_mut(n, m).copy_from(&(-grad_v));
        let y = self.lu.solve(&rhs).ok_or(SolveError::SingularSystem)?;
        let y_u = y.rows(0, n);
        let y_v = y.rows(n, m);
        Ok(y_u * self.v.transpose() + &self.u * y_v.transpose())
    }
}

/// Gradient of a loss `L(u, v)` with respect to the payoff matrix, by
/// implicit differentiation of the KKT system at the solution.
pub fn backward_normal(
    payoff: &PayoffMatrix,
    sol: &QreSolution,
    grad_u: &DVector<f64>,
    grad_v: &DVector<f64>,
) -> Result<DMatrix<f64>, SolveError> {
    NormalBackward::new(payoff, &sol.u, &sol.v).grad_payoff(grad_u, grad_v)
}

fn check_dims(payoff: &PayoffMatrix, u: &DVector<f64>, v: &DVector<f64>) -> Result<(), SolveError> {
    if u.len() != payoff.rows() || v.len() != payoff.cols() {
        return Err(SolveError::DimensionMismatch(format!(
            "strategies of length {} and {} for a {}x{} payoff",
            u.len(),
            v.len(),
            payoff.rows(),
            payoff.cols()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn payoff(rows: usize, cols: usize, entries: &[f64]) -> PayoffMatrix {
        PayoffMatrix::new(DMatrix::from_row_slice(rows, cols, entries)).unwrap()
    }

    fn rps(b: [f64; 3]) -> PayoffMatrix {
        payoff(
            3,
            3,
            &[
                0.0, -b[0], b[1], //
                b[0], 0.0, -b[2], //
                -b[1], b[2], 0.0,
            ],
        )
    }

    #[test]
    fn kkt_residual_vanishes_at_the_known_solution() {
        let p = payoff(2, 2, &[0.0; 4]);
        let u = dvector![0.5, 0.5];
        let mu = 2f64.ln() - 1.0;
        let nu = 1.0 - 2f64.ln();
        let g = kkt_residual(&p, &u, &u, mu, nu).unwrap();
        assert!(inf_norm(&g) < 1e-15);
    }

    #[test]
    fn kkt_residual_at_uniform_with_zero_multipliers() {
        let p = payoff(3, 3, &[0.0; 9]);
        let u = DVector::from_element(3, 1.0 / 3.0);
        let g = kkt_residual(&p, &u, &u, 0.0, 0.0).unwrap();
        let expected = 1.0 + (1.0f64 / 3.0).ln();
        for i in 0..3 {
            assert!((g[i] - expected).abs() < 1e-15);
            assert!((g[3 + i] + expected).abs() < 1e-15);
        }
        assert!(g[6].abs() < 1e-15 && g[7].abs() < 1e-15);
    }

    #[test]
    fn kkt_residual_rejects_nonpositive_strategies() {
        let p = payoff(2, 2, &[0.0; 4]);
        let err = kkt_residual(&p, &dvector![1.0, 0.0], &dvector![0.5, 0.5], 0.0, 0.0);
        assert!(matches!(err, Err(SolveError::NonPositiveStrategy)));
    }

    #[test]
    fn zero_game_solves_to_uniform() {
        for k in [2usize, 5] {
            let p = payoff(k, k, &vec![0.0; k * k]);
            let sol = solve_normal(&p, &SolverOptions::default()).unwrap();
            for x in sol.u.iter().chain(sol.v.iter()) {
                assert!((x - 1.0 / k as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn classic_rps_solves_to_uniform() {
        let sol = solve_normal(&rps([1.0, 1.0, 1.0]), &SolverOptions::default()).unwrap();
        for x in sol.u.iter().chain(sol.v.iter()) {
            assert!((x - 1.0 / 3.0).abs() < 1e-10);
        }
        assert!(sol.residual <= 1e-10);
    }

    #[test]
    fn scaled_symmetric_rps_stays_uniform() {
        // b1 = b2 = b3 keeps the cyclic symmetry, so the equilibrium stays
        // invariant under the rotation R -> P -> S.
        let sol = solve_normal(&rps([2.5, 2.5, 2.5]), &SolverOptions::default()).unwrap();
        for x in sol.u.iter().chain(sol.v.iter()) {
            assert!((x - 1.0 / 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn matching_pennies_solves_to_even_split() {
        let p = payoff(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let sol = solve_normal(&p, &SolverOptions::default()).unwrap();
        for x in sol.u.iter().chain(sol.v.iter()) {
            assert!((x - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn solution_satisfies_both_residuals() {
        let p = payoff(
            3,
            4,
            &[
                2.1, -3.0, 0.4, 1.2, -0.5, 4.0, -2.2, 0.1, 3.3, -1.0, 0.0, 2.5,
            ],
        );
        let sol = solve_normal(&p, &SolverOptions::default()).unwrap();
        let g = kkt_residual(&p, &sol.u, &sol.v, sol.mu, sol.nu).unwrap();
        assert!(inf_norm(&g) <= 1e-10);
        assert!(fixed_point_residual(&p, &sol.u, &sol.v) <= 1e-8);
    }

    #[test]
    fn fixed_point_residual_is_zero_for_zero_game_at_uniform() {
        let p = payoff(3, 3, &[0.0; 9]);
        let u = DVector::from_element(3, 1.0 / 3.0);
        assert!(fixed_point_residual(&p, &u, &u) < 1e-15);
    }

    #[test]
    fn fixed_point_residual_detects_perturbations() {
        let p = payoff(3, 3, &[1.0, -2.0, 0.3, 0.7, 1.5, -1.1, -0.4, 0.2, 0.9]);
        let sol = solve_normal(&p, &SolverOptions::default()).unwrap();
        let mut u = sol.u.clone();
        u[0] += 1e-3;
        u[1] -= 1e-3;
        assert!(fixed_point_residual(&p, &u, &sol.v) > 1e-4);
    }

    #[test]
    fn newton_matrix_is_symmetric() {
        let p = payoff(2, 3, &[1.0, 2.0, -0.5, 0.0, -1.5, 3.0]);
        let u = dvector![0.3, 0.7];
        let v = dvector![0.2, 0.5, 0.3];
        let q = newton_matrix(p.matrix(), &u, &v);
        assert_eq!(q, q.transpose());
    }

    #[test]
    fn residual_decreases_monotonically() {
        let p = payoff(
            4,
            4,
            &[
                3.0, -1.0, 2.0, 0.5, -2.0, 1.0, 0.0, -1.5, 4.0, -3.0, 1.0, 2.0, 0.0, 1.0, -2.0, 3.0,
            ],
        );
        let sol = solve_normal(&p, &SolverOptions::default()).unwrap();
        let mut prev = f64::INFINITY;
        for rec in &sol.history {
            assert!(rec.residual < prev);
            prev = rec.residual;
        }
    }

    #[test]
    fn convergence_is_locally_quadratic() {
        let p = payoff(5, 5, &{
            let mut e = Vec::new();
            for i in 0..25 {
                e.push(((i * 37 % 11) as f64 - 5.0) * 0.6);
            }
            e
        });
        let sol = solve_normal(&p, &SolverOptions::default()).unwrap();
        // Once inside Newton's basin the residual ratio r_{k+1}/r_k^2 stays
        // bounded; allow slack for the first iterations and float noise.
        let mut probed = false;
        for w in sol.history.windows(2) {
            let (r0, r1) = (w[0].residual, w[1].residual);
            if r0 < 1e-4 && r0 > 1e-12 && w[1].step == 1.0 {
                assert!(r1 <= 1e4 * r0 * r0 + 1e-14, "r0 = {r0:e}, r1 = {r1:e}");
                probed = true;
            }
        }
        assert!(probed, "no iteration pair in the quadratic regime");
    }

    #[test]
    fn constant_shift_leaves_equilibrium_unchanged() {
        let base = payoff(3, 3, &[1.0, -2.0, 0.3, 0.7, 1.5, -1.1, -0.4, 0.2, 0.9]);
        let sol = solve_normal(&base, &SolverOptions::default()).unwrap();
        for c in [-3.0, 7.0] {
            let shifted = PayoffMatrix::new(base.matrix().add_scalar(c)).unwrap();
            let sol_c = solve_normal(&shifted, &SolverOptions::default()).unwrap();
            assert!(inf_norm(&(&sol.u - &sol_c.u)) < 1e-6);
            assert!(inf_norm(&(&sol.v - &sol_c.v)) < 1e-6);
        }
    }

    #[test]
    fn backward_with_zero_gradients_is_zero() {
        let p = payoff(3, 3, &[1.0, -2.0, 0.3, 0.7, 1.5, -1.1, -0.4, 0.2, 0.9]);
        let sol = solve_normal(&p, &SolverOptions::default()).unwrap();
        let g = backward_normal(&p, &sol, &DVector::zeros(3), &DVector::zeros(3)).unwrap();
        assert!(g.amax() == 0.0);
    }

    #[test]
    fn backward_of_a_constant_loss_is_zero() {
        // L = 1ᵀu is identically 1 on the simplex, so its payoff gradient
        // must vanish.
        let p = payoff(3, 3, &[1.0, -2.0, 0.3, 0.7, 1.5, -1.1, -0.4, 0.2, 0.9]);
        let sol = solve_normal(&p, &SolverOptions::default()).unwrap();
        let g =
            backward_normal(&p, &sol, &DVector::from_element(3, 1.0), &DVector::zeros(3)).unwrap();
        assert!(g.amax() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let p = payoff(3, 3, &[1.3, -0.8, 0.2, 0.5, 2.0, -1.4, -0.9, 0.4, 1.1]);
        let tight = SolverOptions {
            tol: 1e-12,
            ..Default::default()
        };
        let sol = solve_normal(&p, &tight).unwrap();

        // L = log u_0.
        let mut grad_u = DVector::zeros(3);
        grad_u[0] = 1.0 / sol.u[0];
        let analytic = backward_normal(&p, &sol, &grad_u, &DVector::zeros(3)).unwrap();

        let h = 1e-5;
        for r in 0..3 {
            for c in 0..3 {
                let mut plus = p.matrix().clone();
                plus[(r, c)] += h;
                let mut minus = p.matrix().clone();
                minus[(r, c)] -= h;
                let lp = solve_normal(&PayoffMatrix::new(plus).unwrap(), &tight)
                    .unwrap()
                    .u[0]
                    .ln();
                let lm = solve_normal(&PayoffMatrix::new(minus).unwrap(), &tight)
                    .unwrap()
                    .u[0]
                    .ln();
                let fd = (lp - lm) / (2.0 * h);
                let a = analytic[(r, c)];
                assert!(
                    (a - fd).abs() <= 1e-4 * fd.abs().max(1e-3),
                    "entry ({r},{c}): analytic {a:e} vs fd {fd:e}"
                );
            }
        }
    }
}
