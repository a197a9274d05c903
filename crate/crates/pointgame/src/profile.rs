//! Profile functions and the finite linear maps used by the search.
//!
//! The kernel is `P_x(λ) = λx/(λ+x)` for `λ > 0`; a one-dimensional function
//! `f` has profile `f̂(λ) = Σ f(x) P_x(λ)`. Over a grid `S` and parameter set
//! `T` this becomes the matrix `H[t][x] = P_x(t)`, and `D` maps `ℝ^{|S|-1}`
//! onto the zero-sum functions on `S`.

use nalgebra::{DMatrix, DVector, SVD};
use thiserror::Error;

use crate::points::Move;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("grid S must be strictly increasing, finite and nonnegative")]
    BadGrid,
    #[error("grid S needs at least two points")]
    GridTooSmall,
    #[error("parameter set T must be nonempty and finite")]
    BadParams,
    #[error("truncation threshold must be positive, got {0}")]
    BadDelta(f64),
    #[error("penalty must be finite and nonnegative, got {0}")]
    BadLambda(f64),
}

/// How many singular directions of `H∘D` to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Keep every `c_j >= δ`.
    Delta(f64),
    /// Keep exactly this many (capped by the number available).
    Rank(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub delta: f64,
    pub truncation: Option<usize>,
    pub lambda: f64,
}

impl GridSpec {
    pub fn new(
        s: Vec<f64>,
        t: Vec<f64>,
        delta: f64,
        truncation: Option<usize>,
        lambda: f64,
    ) -> Result<GridSpec, ProfileError> {
        if s.iter().any(|x| !x.is_finite() || *x < 0.0) || s.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ProfileError::BadGrid);
        }
        if s.len() < 2 {
            return Err(ProfileError::GridTooSmall);
        }
        if t.is_empty() || t.iter().any(|x| !x.is_finite()) {
            return Err(ProfileError::BadParams);
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(ProfileError::BadDelta(delta));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(ProfileError::BadLambda(lambda));
        }
        Ok(GridSpec { s, t, delta, truncation, lambda })
    }

    pub fn rule(&self) -> Truncation {
        match self.truncation {
            Some(k) => Truncation::Rank(k),
            None => Truncation::Delta(self.delta),
        }
    }
}

/// Profile values indexed by a parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileVector {
    pub params: Vec<f64>,
    pub values: Vec<f64>,
}

impl ProfileVector {
    pub fn of(f: &[(f64, f64)], params: &[f64]) -> ProfileVector {
        ProfileVector {
            params: params.to_vec(),
            values: params.iter().map(|&l| profile_1d(f, l)).collect(),
        }
    }
}

pub fn kernel(x: f64, lam: f64) -> f64 {
    if x > 0.0 {
        if lam > 0.0 {
            lam * x / (lam + x)
        } else {
            1.0
        }
    } else if lam >= 0.0 {
        0.0
    } else {
        1.0
    }
}

/// `Σ f(x) P_x(λ)` for a one-dimensional function given as `(x, weight)` pairs.
pub fn profile_1d(f: &[(f64, f64)], lam: f64) -> f64 {
    f.iter().map(|&(x, w)| w * kernel(x, lam)).sum()
}

/// `Σ m(x,y) P_x(a) P_y(b)`.
pub fn profile_2d(m: &Move, a: f64, b: f64) -> f64 {
    m.points().map(|p| p.w * kernel(p.x, a) * kernel(p.y, b)).sum()
}

pub fn line_sum(f: &[(f64, f64)]) -> f64 {
    f.iter().map(|&(_, w)| w).sum()
}

pub fn first_moment(f: &[(f64, f64)]) -> f64 {
    f.iter().map(|&(x, w)| x * w).sum()
}

/// `n` log-spaced parameters from 1e-6 to 1e6.
pub fn dense_lambdas(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![1.0],
        _ => (0..n)
            .map(|i| 10f64.powf(-6.0 + 12.0 * i as f64 / (n - 1) as f64))
            .collect(),
    }
}

/// `|S| x (|S|-1)` matrix with `D[j][j] = 1`, `D[j+1][j] = -1`.
pub fn diff_operator(n: usize) -> Result<DMatrix<f64>, ProfileError> {
    if n < 2 {
        return Err(ProfileError::GridTooSmall);
    }
    let mut d = DMatrix::zeros(n, n - 1);
    for j in 0..n - 1 {
        d[(j, j)] = 1.0;
        d[(j + 1, j)] = -1.0;
    }
    Ok(d)
}

/// `|T| x |S|` matrix `H[t][x] = P_x(t)`.
pub fn profile_matrix(s: &[f64], t: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(t.len(), s.len(), |i, j| kernel(s[j], t[i]))
}

/// Thin SVD of `H∘D` with the retained subspace.
#[derive(Debug, Clone)]
pub struct SvdPrimed {
    /// All singular values, nonincreasing.
    pub singular_values: Vec<f64>,
    /// Right singular vectors as columns, `(|S|-1) x r`, same order.
    pub vectors: DMatrix<f64>,
    /// Retained rank.
    pub rank: usize,
    /// `D` applied to the retained vectors: a `|S| x k` basis of zero-sum functions.
    pub basis: DMatrix<f64>,
}

/// Singular values and vectors of `m` sorted descending, ties by input order.
pub(crate) fn sorted_svd(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let svd = SVD::new(m.clone(), false, true);
    let vt = svd.v_t.expect("right vectors requested");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let values = order.iter().map(|&i| sv[i]).collect();
    let vectors = DMatrix::from_fn(m.ncols(), order.len(), |r, c| vt[(order[c], r)]);
    (values, vectors)
}

pub fn svd_primed(s: &[f64], t: &[f64], rule: Truncation) -> Result<SvdPrimed, ProfileError> {
    let d = diff_operator(s.len())?;
    let hp = profile_matrix(s, t) * &d;
    let (singular_values, vectors) = sorted_svd(&hp);
    let rank = match rule {
        Truncation::Delta(delta) => singular_values.iter().take_while(|&&c| c >= delta).count(),
        Truncation::Rank(k) => k.min(singular_values.len()),
    };
    let basis = &d * vectors.columns(0, rank);
    Ok(SvdPrimed { singular_values, vectors, rank, basis })
}

/// Right singular vectors of `H` completed to an orthonormal basis of `ℝ^S`,
/// sorted by descending singular value (missing values reported as 0).
pub fn profile_basis(s: &[f64], t: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let n = s.len();
    let h = profile_matrix(s, t);
    let rows = t.len().max(n);
    let padded = DMatrix::from_fn(rows, n, |i, j| if i < t.len() { h[(i, j)] } else { 0.0 });
    sorted_svd(&padded)
}

/// `H D c` evaluated directly, for cross-checks.
pub fn profile_of_coefficients(s: &[f64], t: &[f64], coeffs: &DVector<f64>) -> DVector<f64> {
    let d = diff_operator(s.len()).expect("grid has two points");
    profile_matrix(s, t) * (d * coeffs)
}
