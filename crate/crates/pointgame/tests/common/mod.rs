//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;

/// Ascending coefficients of `a·b`.
fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Real roots of an ascending-coefficient polynomial from its companion matrix.
pub fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut c = coeffs.to_vec();
    while c.len() > 1 && c.last().unwrap().abs() <= 1e-14 * scale {
        c.pop();
    }
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = c[n];
    let mut m = DMatrix::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, n - 1)] = -c[i] / lead;
    }
    m.complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-7 * z.re.abs().max(1e-12))
        .map(|z| z.re)
        .collect()
}

/// `inf_{λ>0} Σ f(x)·λx/(λ+x)` for a zero-sum `f`.
///
/// The profile is a rational function whose only poles are at `λ = −x`, so on
/// `(0, ∞)` it attains its infimum at a root of the numerator of its
/// derivative `Σ f(x)x²/(λ+x)²`, or in one of the limits `λ → 0` (value 0) and
/// `λ → ∞` (value `Σ x·f(x)`).
pub fn oracle_minimum(f: &[(f64, f64)]) -> f64 {
    let mut num = vec![0.0];
    for (i, &(xi, wi)) in f.iter().enumerate() {
        let mut term = vec![wi * xi * xi];
        for (j, &(xj, _)) in f.iter().enumerate() {
            if j != i {
                term = poly_mul(&term, &[xj * xj, 2.0 * xj, 1.0]);
            }
        }
        if num.len() < term.len() {
            num.resize(term.len(), 0.0);
        }
        for (k, t) in term.into_iter().enumerate() {
            num[k] += t;
        }
    }
    let profile = |lam: f64| f.iter().map(|&(x, w)| w * lam * x / (lam + x)).sum::<f64>();
    let first_moment: f64 = f.iter().map(|&(x, w)| x * w).sum();
    real_roots(&num)
        .into_iter()
        .filter(|&r| r > 0.0)
        .map(profile)
        .fold(first_moment.min(0.0), f64::min)
}
