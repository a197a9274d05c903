//! Weighted point sets on the nonnegative quadrant.
//!
//! A [`Move`] is a finitely supported signed function of `(x, y)`; a
//! [`Configuration`] is a move whose weights are all nonnegative. Both keep a
//! canonical form in which no two entries share a coordinate pair and
//! negligible weights are dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Deref, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default zero tolerance, relative to the largest absolute weight.
pub const ZERO_TOL: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("coordinate ({x}, {y}) is negative or not finite")]
    BadCoordinate { x: f64, y: f64 },
    #[error("weight {w} at ({x}, {y}) is not finite")]
    BadWeight { x: f64, y: f64, w: f64 },
    #[error("weight {w} at ({x}, {y}) is negative in a configuration")]
    NegativeWeight { x: f64, y: f64, w: f64 },
    #[error("operation needs a nonempty support")]
    EmptySupport,
    #[error("coordinate {0} is not on the grid")]
    OffGrid(f64),
    #[error("matrix is {rows}x{cols}, grid has {n} points")]
    Shape { rows: usize, cols: usize, n: usize },
    #[error("penalty must be finite and nonnegative, got {0}")]
    BadLambda(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMass {
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

impl PointMass {
    pub fn new(x: f64, y: f64, w: f64) -> Self {
        PointMass { x, y, w }
    }
}

/// Orders nonnegative floats by their bit pattern, which agrees with numeric order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Key(u64, u64);

impl Key {
    fn new(x: f64, y: f64) -> Self {
        // -0.0 and 0.0 share a key
        Key((x + 0.0).to_bits(), (y + 0.0).to_bits())
    }
    fn x(self) -> f64 {
        f64::from_bits(self.0)
    }
    fn y(self) -> f64 {
        f64::from_bits(self.1)
    }
}

fn check_coord(x: f64, y: f64) -> Result<(), CoreError> {
    if x.is_finite() && y.is_finite() && x >= 0.0 && y >= 0.0 {
        Ok(())
    } else {
        Err(CoreError::BadCoordinate { x, y })
    }
}

/// Finitely supported signed bivariate function.
#[derive(Clone, Default, PartialEq)]
pub struct Move {
    entries: BTreeMap<Key, f64>,
}

impl fmt::Debug for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.points().map(|p| (p.x, p.y, p.w)))
            .finish()
    }
}

impl Move {
    pub fn new() -> Self {
        Move::default()
    }

    /// Builds a move, summing weights of repeated coordinates.
    pub fn from_points<I>(points: I) -> Result<Move, CoreError>
    where
        I: IntoIterator<Item = PointMass>,
    {
        let mut entries = BTreeMap::new();
        for p in points {
            check_coord(p.x, p.y)?;
            if !p.w.is_finite() {
                return Err(CoreError::BadWeight { x: p.x, y: p.y, w: p.w });
            }
            *entries.entry(Key::new(p.x, p.y)).or_insert(0.0) += p.w;
        }
        Ok(Move { entries }.canonical(ZERO_TOL))
    }

    pub fn from_triples(points: &[(f64, f64, f64)]) -> Result<Move, CoreError> {
        Move::from_points(points.iter().map(|&(x, y, w)| PointMass::new(x, y, w)))
    }

    /// Single point `w[x, y]`.
    pub fn point(x: f64, y: f64, w: f64) -> Result<Move, CoreError> {
        Move::from_points([PointMass::new(x, y, w)])
    }

    /// Reads a |S|x|S| matrix. With `RowX`, entry `[i][j]` is the weight at `(S[i], S[j])`.
    pub fn from_matrix(
        grid: &[f64],
        m: &DMatrix<f64>,
        orientation: Orientation,
    ) -> Result<Move, CoreError> {
        let n = grid.len();
        if m.nrows() != n || m.ncols() != n {
            return Err(CoreError::Shape { rows: m.nrows(), cols: m.ncols(), n });
        }
        let mut pts = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let (x, y) = match orientation {
                    Orientation::RowX => (grid[i], grid[j]),
                    Orientation::RowY => (grid[j], grid[i]),
                };
                pts.push(PointMass::new(x, y, m[(i, j)]));
            }
        }
        Move::from_points(pts)
    }

    /// Matrix indexed `[x][y]` over the grid.
    pub fn to_matrix(&self, grid: &[f64]) -> Result<DMatrix<f64>, CoreError> {
        let n = grid.len();
        let mut m = DMatrix::zeros(n, n);
        for p in self.points() {
            let i = grid_index(grid, p.x).ok_or(CoreError::OffGrid(p.x))?;
            let j = grid_index(grid, p.y).ok_or(CoreError::OffGrid(p.y))?;
            m[(i, j)] = p.w;
        }
        Ok(m)
    }

    pub fn points(&self) -> impl Iterator<Item = PointMass> + '_ {
        self.entries
            .iter()
            .map(|(k, &w)| PointMass::new(k.x(), k.y(), w))
    }

    pub fn weight(&self, x: f64, y: f64) -> f64 {
        self.entries.get(&Key::new(x, y)).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.entries.values().fold(0.0, |a, w| a.max(w.abs()))
    }

    /// Drops entries with `|w| <= tol * max|w|`.
    pub fn canonical(&self, tol: f64) -> Move {
        let cut = tol * self.max_abs_weight();
        Move {
            entries: self
                .entries
                .iter()
                .filter(|(_, w)| w.abs() > cut)
                .map(|(k, w)| (*k, *w))
                .collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Move {
        Move {
            entries: self.entries.iter().map(|(k, w)| (*k, c * w)).collect(),
        }
        .canonical(ZERO_TOL)
    }

    fn combine(&self, other: &Move, sign: f64) -> Move {
        let mut entries = self.entries.clone();
        for (k, w) in &other.entries {
            *entries.entry(*k).or_insert(0.0) += sign * w;
        }
        Move { entries }.canonical(ZERO_TOL)
    }

    /// Horizontal lines: for each `y`, the one-dimensional function `x -> w`.
    pub fn rows(&self) -> Vec<(f64, Vec<(f64, f64)>)> {
        let mut by_y: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
        for p in self.points() {
            by_y.entry((p.y + 0.0).to_bits()).or_default().push((p.x, p.w));
        }
        by_y.into_iter().map(|(y, l)| (f64::from_bits(y), l)).collect()
    }

    /// Vertical lines: for each `x`, the one-dimensional function `y -> w`.
    pub fn columns(&self) -> Vec<(f64, Vec<(f64, f64)>)> {
        transpose(self).rows()
    }

    /// Every coordinate value appearing in the support, on either axis.
    pub fn coordinates(&self) -> BTreeSet<u64> {
        let mut s = BTreeSet::new();
        for p in self.points() {
            s.insert((p.x + 0.0).to_bits());
            s.insert((p.y + 0.0).to_bits());
        }
        s
    }
}

impl Add for &Move {
    type Output = Move;
    fn add(self, rhs: &Move) -> Move {
        self.combine(rhs, 1.0)
    }
}

impl Sub for &Move {
    type Output = Move;
    fn sub(self, rhs: &Move) -> Move {
        self.combine(rhs, -1.0)
    }
}

impl Neg for &Move {
    type Output = Move;
    fn neg(self) -> Move {
        self.scale(-1.0)
    }
}

impl Mul<&Move> for f64 {
    type Output = Move;
    fn mul(self, rhs: &Move) -> Move {
        rhs.scale(self)
    }
}

/// Nonnegative finitely supported bivariate function.
#[derive(Clone, Default, PartialEq, Debug)]
pub struct Configuration(Move);

impl Configuration {
    /// Accepts a move whose negative weights are within the zero tolerance; those are dropped.
    pub fn new(m: Move) -> Result<Configuration, CoreError> {
        let cut = ZERO_TOL * m.max_abs_weight().max(1.0);
        let mut entries = BTreeMap::new();
        for (k, &w) in &m.entries {
            if w < -cut {
                return Err(CoreError::NegativeWeight { x: k.x(), y: k.y(), w });
            }
            if w > 0.0 {
                entries.insert(*k, w);
            }
        }
        Ok(Configuration(Move { entries }))
    }

    /// Clips negative weights to zero.
    pub fn clip(m: &Move) -> Configuration {
        Configuration(Move {
            entries: m
                .entries
                .iter()
                .filter(|(_, w)| **w > 0.0)
                .map(|(k, w)| (*k, *w))
                .collect(),
        })
    }

    pub fn from_points<I>(points: I) -> Result<Configuration, CoreError>
    where
        I: IntoIterator<Item = PointMass>,
    {
        Configuration::new(Move::from_points(points)?)
    }

    pub fn as_move(&self) -> &Move {
        &self.0
    }

    pub fn into_move(self) -> Move {
        self.0
    }
}

impl Deref for Configuration {
    type Target = Move;
    fn deref(&self) -> &Move {
        &self.0
    }
}

/// Matrix layout of a serialized move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    #[serde(rename = "row=x")]
    RowX,
    #[serde(rename = "row=y")]
    RowY,
}

/// Start and end configurations of a symmetric penalised point game.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    pub lambda: f64,
    pub epsilon: f64,
    pub start: Configuration,
    pub end: Configuration,
}

impl Boundary {
    /// `start = ½[Λ,Λ+1] + ½[Λ+1,Λ]`, `end = [Λ+½+ε, Λ+½+ε]`.
    pub fn symmetric(lambda: f64, epsilon: f64) -> Result<Boundary, CoreError> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(CoreError::BadLambda(lambda));
        }
        let start = Configuration::from_points([
            PointMass::new(lambda, lambda + 1.0, 0.5),
            PointMass::new(lambda + 1.0, lambda, 0.5),
        ])?;
        let f = lambda + 0.5 + epsilon;
        let end = Configuration::from_points([PointMass::new(f, f, 1.0)])?;
        Ok(Boundary { lambda, epsilon, start, end })
    }

    /// Symmetric boundary whose coordinates are snapped to the grid values
    /// `Λ`, `Λ+1` and `Λ+½+ε` (relative match 1e-9), so that keys compare exactly.
    pub fn on_grid(lambda: f64, epsilon: f64, grid: &[f64]) -> Result<Boundary, CoreError> {
        let snap = |v: f64| {
            grid.iter()
                .copied()
                .find(|g| (g - v).abs() <= 1e-9 * v.abs().max(1e-300))
                .ok_or(CoreError::OffGrid(v))
        };
        let (lo, hi, f) = (snap(lambda)?, snap(lambda + 1.0)?, snap(lambda + 0.5 + epsilon)?);
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(CoreError::BadLambda(lambda));
        }
        Ok(Boundary {
            lambda,
            epsilon,
            start: Configuration::from_points([PointMass::new(lo, hi, 0.5), PointMass::new(hi, lo, 0.5)])?,
            end: Configuration::from_points([PointMass::new(f, f, 1.0)])?,
        })
    }

    /// `end - start`.
    pub fn difference(&self) -> Move {
        self.end.as_move() - self.start.as_move()
    }

    /// `(β, α)`: the x and y coordinates of the final point.
    pub fn final_point(&self) -> (f64, f64) {
        let p = self.end.points().next().expect("end is a single point");
        (p.x, p.y)
    }
}

/// Index of `v` in a sorted grid, by exact comparison.
pub fn grid_index(grid: &[f64], v: f64) -> Option<usize> {
    grid.iter().position(|&g| g == v)
}

pub fn l1_norm(m: &Move) -> f64 {
    m.entries.values().fold(0.0, |a, w| a + w.abs())
}

pub fn transpose(m: &Move) -> Move {
    Move {
        entries: m
            .entries
            .iter()
            .map(|(k, w)| (Key(k.1, k.0), *w))
            .collect(),
    }
}

/// `(m⁺, m⁻)` with `m = m⁺ − m⁻`.
pub fn split_signs(m: &Move) -> (Configuration, Configuration) {
    (Configuration::clip(m), Configuration::clip(&-m))
}

/// Smallest `max(x, y)` over the support.
pub fn min_coordinate(m: &Move) -> Result<f64, CoreError> {
    m.points()
        .map(|p| p.x.max(p.y))
        .reduce(f64::min)
        .ok_or(CoreError::EmptySupport)
}

/// Largest coordinate on either axis over the support.
pub fn max_coordinate(m: &Move) -> Result<f64, CoreError> {
    m.points()
        .map(|p| p.x.max(p.y))
        .reduce(f64::max)
        .ok_or(CoreError::EmptySupport)
}

/// Smallest coordinate on either axis over the support.
pub fn min_any_coordinate(m: &Move) -> Result<f64, CoreError> {
    m.points()
        .map(|p| p.x.min(p.y))
        .reduce(f64::min)
        .ok_or(CoreError::EmptySupport)
}

pub fn support_count(m: &Move) -> usize {
    m.len()
}

/// Size of the union of supports.
pub fn support_union(moves: &[&Move]) -> usize {
    let mut keys = BTreeSet::new();
    for m in moves {
        keys.extend(m.entries.keys().copied());
    }
    keys.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_of_empty_and_start() {
        assert_eq!(l1_norm(&Move::new()), 0.0);
        let b = Boundary::symmetric(1.0, 0.0).unwrap();
        assert_eq!(l1_norm(&b.start), 1.0);
        assert_eq!(support_count(&b.start), 2);
    }

    #[test]
    fn transpose_basics() {
        let m = Move::point(1.0, 2.0, 0.5).unwrap();
        assert_eq!(transpose(&m), Move::point(2.0, 1.0, 0.5).unwrap());
        let d = Move::point(3.0, 3.0, 1.0).unwrap();
        assert_eq!(transpose(&d), d);
    }

    #[test]
    fn split_signs_parts() {
        let m = Move::from_triples(&[(1.0, 1.0, 1.0), (2.0, 2.0, -0.5)]).unwrap();
        let (p, n) = split_signs(&m);
        assert_eq!(*p.as_move(), Move::point(1.0, 1.0, 1.0).unwrap());
        assert_eq!(*n.as_move(), Move::point(2.0, 2.0, 0.5).unwrap());
        let q = Move::point(1.0, 1.0, 2.0).unwrap();
        let (p, n) = split_signs(&q);
        assert_eq!(*p.as_move(), q);
        assert!(n.is_empty());
    }

    #[test]
    fn coordinate_extremes() {
        let m = Move::from_triples(&[(0.0, 1.0, 1.0), (1.0, 0.0, 1.0)]).unwrap();
        assert_eq!(min_coordinate(&m).unwrap(), 1.0);
        let p = Move::point(3.0, 2.0, 1.0).unwrap();
        assert_eq!(min_coordinate(&p).unwrap(), 3.0);
        assert_eq!(max_coordinate(&p).unwrap(), 3.0);
        assert_eq!(min_coordinate(&Move::new()), Err(CoreError::EmptySupport));
    }

    #[test]
    fn duplicates_sum_and_zeros_vanish() {
        let m = Move::from_triples(&[(1.0, 1.0, 0.25), (1.0, 1.0, 0.25), (2.0, 1.0, 0.0)]).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.weight(1.0, 1.0), 0.5);
        let z = &m - &m;
        assert!(z.is_empty());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Move::point(-1.0, 0.0, 1.0).is_err());
        assert!(Move::point(f64::NAN, 0.0, 1.0).is_err());
        assert!(Configuration::new(Move::point(1.0, 1.0, -1.0).unwrap()).is_err());
        assert!(Boundary::symmetric(-1.0, 0.0).is_err());
    }

    #[test]
    fn matrix_round_trip_and_orientation() {
        let grid = [1.0, 2.0];
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let a = Move::from_matrix(&grid, &m, Orientation::RowX).unwrap();
        assert_eq!(a.weight(1.0, 2.0), 1.0);
        let b = Move::from_matrix(&grid, &m, Orientation::RowY).unwrap();
        assert_eq!(b, transpose(&a));
        assert_eq!(a.to_matrix(&grid).unwrap(), m);
    }

    #[test]
    fn lines() {
        let m = Move::from_triples(&[(1.0, 5.0, 1.0), (2.0, 5.0, -1.0), (1.0, 6.0, 3.0)]).unwrap();
        let rows = m.rows();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], (5.0, vec![(1.0, 1.0), (2.0, -1.0)]));
        let cols = m.columns();
        assert_eq!(cols[0], (1.0, vec![(5.0, 1.0), (6.0, 3.0)]));
    }
}
