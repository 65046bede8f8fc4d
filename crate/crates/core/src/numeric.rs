//! Small numeric helpers shared by the two solvers.

use nalgebra::DVector;

/// Numerically stable softmax.
pub fn softmax(z: &DVector<f64>) -> DVector<f64> {
    let max = z.max();
    let mut out = z.map(|x| (x - max).exp());
    let sum = out.sum();
    out /= sum;
    out
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Fraction-to-boundary rule: the largest step `alpha <= 1` such that
/// `x + alpha * dx >= (1 - tau) * x` componentwise, keeping strictly
/// positive iterates strictly positive.
pub fn fraction_to_boundary(x: &DVector<f64>, dx: &DVector<f64>, tau: f64) -> f64 {
    let mut alpha: f64 = 1.0;
    for (xi, di) in x.iter().zip(dx.iter()) {
        if *di < 0.0 {
            alpha = alpha.min(tau * (-xi / di));
        }
    }
    alpha
}

/// Natural log with a floor that only guards against overflow of `ln(0)`;
/// the boundary rule keeps solver iterates far from it in practice.
pub fn safe_ln(x: f64) -> f64 {
    x.max(1e-300).ln()
}
