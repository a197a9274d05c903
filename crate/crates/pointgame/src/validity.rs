//! Validity of one-dimensional functions, moves and transitions.
//!
//! A zero-sum function `a` is valid when its profile is nonnegative for every
//! `λ > 0` and `Σ x·a(x) ≥ 0`. Checks never fail on invalid input; they
//! return reports so callers can treat validity as a soft signal.

use serde::Serialize;

use crate::par::{self, Mode};
use crate::points::{l1_norm, Configuration, Move};
use crate::profile::{dense_lambdas, first_moment, line_sum, profile_1d};

/// Number of points in the default dense sweep.
pub const DENSE_POINTS: usize = 601;
/// Tolerance for data printed at six decimals.
pub const GOLDEN_TOL: f64 = 5e-6;
/// Tolerance for solutions produced here.
pub const SELF_TOL: f64 = 1e-10;

/// Line differences lighter than this (relative to frame mass) count as zero in transitions.
const NULL_LINE: f64 = 1e-12;

/// Which `λ` values a check inspects.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepMode {
    /// Only the listed parameters (T-validity); the first moment is reported, not enforced.
    Grid(Vec<f64>),
    /// Log grid of this many points over [1e-6, 1e6], locally refined, plus the first moment.
    Dense(usize),
}

impl SweepMode {
    pub fn dense() -> SweepMode {
        SweepMode::Dense(DENSE_POINTS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidityReport {
    pub is_valid: bool,
    pub worst_lambda: f64,
    pub worst_value: f64,
    pub sum_residual: f64,
    pub first_moment: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Axis {
    Horizontal,
    Vertical,
}

impl Axis {
    pub fn other(self) -> Axis {
        match self {
            Axis::Horizontal => Axis::Vertical,
            Axis::Vertical => Axis::Horizontal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineReport {
    /// The fixed coordinate of the line (`y` for rows, `x` for columns).
    pub coordinate: f64,
    pub report: ValidityReport,
}

/// Per-line reports of a bivariate move.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MoveReport {
    pub lines: Vec<LineReport>,
    pub all_valid: bool,
}

impl MoveReport {
    /// The line with the most negative profile value.
    pub fn worst(&self) -> Option<LineReport> {
        self.lines
            .iter()
            .copied()
            .min_by(|a, b| a.report.worst_value.total_cmp(&b.report.worst_value))
    }

    /// Lines that failed.
    pub fn failures(&self) -> impl Iterator<Item = &LineReport> {
        self.lines.iter().filter(|l| !l.report.is_valid)
    }

    pub fn max_sum_residual(&self) -> f64 {
        self.lines
            .iter()
            .fold(0.0, |a, l| a.max(l.report.sum_residual.abs()))
    }
}

fn minimum_over(f: &[(f64, f64)], lams: &[f64]) -> (f64, f64) {
    lams.iter()
        .map(|&l| (l, profile_1d(f, l)))
        .fold((f64::NAN, f64::INFINITY), |acc, (l, v)| if v < acc.1 { (l, v) } else { acc })
}

/// Golden-section minimisation of the profile over `log λ ∈ [a, b]`.
fn refine(f: &[(f64, f64)], a: f64, b: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (a.ln(), b.ln());
    let eval = |t: f64| profile_1d(f, t.exp());
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (eval(c), eval(d));
    for _ in 0..60 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = eval(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = eval(d);
        }
    }
    if fc < fd {
        (c.exp(), fc)
    } else {
        (d.exp(), fd)
    }
}

fn dense_minimum(f: &[(f64, f64)], n: usize) -> (f64, f64) {
    let lams = dense_lambdas(n);
    let vals: Vec<f64> = lams.iter().map(|&l| profile_1d(f, l)).collect();
    let mut best = (f64::NAN, f64::INFINITY);
    for (i, &v) in vals.iter().enumerate() {
        if v < best.1 {
            best = (lams[i], v);
        }
    }
    if n >= 3 {
        for i in 0..n {
            let left = if i > 0 { vals[i - 1] } else { f64::INFINITY };
            let right = if i + 1 < n { vals[i + 1] } else { f64::INFINITY };
            if vals[i] <= left && vals[i] <= right {
                let a = lams[i.saturating_sub(1)];
                let b = lams[(i + 1).min(n - 1)];
                let r = refine(f, a, b);
                if r.1 < best.1 {
                    best = r;
                }
            }
        }
    }
    best
}

pub fn check_valid_1d(f: &[(f64, f64)], mode: &SweepMode, tol: f64) -> ValidityReport {
    let sum = line_sum(f);
    let moment = first_moment(f);
    let (worst_lambda, worst_value, moment_ok) = match mode {
        SweepMode::Grid(t) => {
            let (l, v) = minimum_over(f, t);
            (l, v, true)
        }
        SweepMode::Dense(n) => {
            let (l, v) = dense_minimum(f, *n);
            (l, v, moment >= -tol)
        }
    };
    let worst_value = if worst_value.is_finite() { worst_value } else { 0.0 };
    ValidityReport {
        is_valid: worst_value >= -tol && sum.abs() <= tol && moment_ok,
        worst_lambda,
        worst_value,
        sum_residual: sum,
        first_moment: moment,
    }
}

/// Validity of a list of lines.
pub fn check_lines(
    lines: &[(f64, Vec<(f64, f64)>)],
    mode: &SweepMode,
    tol: f64,
    par_mode: Mode,
) -> MoveReport {
    let lines: Vec<LineReport> = par::map(par_mode, lines, |(c, f)| LineReport {
        coordinate: *c,
        report: check_valid_1d(f, mode, tol),
    });
    let all_valid = lines.iter().all(|l| l.report.is_valid);
    MoveReport { lines, all_valid }
}

/// Rows (fixed `y`) must be valid.
pub fn check_h_valid(m: &Move, mode: &SweepMode, tol: f64) -> MoveReport {
    check_lines(&m.rows(), mode, tol, Mode::Parallel)
}

/// Columns (fixed `x`) must be valid.
pub fn check_v_valid(m: &Move, mode: &SweepMode, tol: f64) -> MoveReport {
    check_lines(&m.columns(), mode, tol, Mode::Parallel)
}

/// `Σg + η ≥ 0` and `ĝ(λ) + η ≥ 0` over the dense sweep and its `λ → ∞` limit.
pub fn check_eta_valid(f: &[(f64, f64)], eta: f64) -> bool {
    if line_sum(f) + eta < 0.0 || first_moment(f) + eta < 0.0 {
        return false;
    }
    dense_minimum(f, DENSE_POINTS).1 + eta >= 0.0
}

/// `g → h` along `axis`: every line of `h − g` must be valid. Lines are
/// checked after scaling to unit L1 mass, so the verdict does not depend on
/// how much weight a transition moves.
pub fn check_transition(
    g: &Configuration,
    h: &Configuration,
    axis: Axis,
    tol: f64,
) -> MoveReport {
    check_transition_with(g, h, axis, tol, &SweepMode::dense(), Mode::Parallel)
}

pub fn check_transition_with(
    g: &Configuration,
    h: &Configuration,
    axis: Axis,
    tol: f64,
    mode: &SweepMode,
    par_mode: Mode,
) -> MoveReport {
    let d = h.as_move() - g.as_move();
    let floor = NULL_LINE * l1_norm(g).max(l1_norm(h)).max(1.0);
    let lines = match axis {
        Axis::Horizontal => d.rows(),
        Axis::Vertical => d.columns(),
    };
    let lines: Vec<LineReport> = par::map(par_mode, &lines, |(c, f)| {
        let mass: f64 = f.iter().map(|(_, w)| w.abs()).sum();
        let report = if mass <= floor {
            ValidityReport {
                is_valid: true,
                worst_lambda: f64::NAN,
                worst_value: 0.0,
                sum_residual: 0.0,
                first_moment: 0.0,
            }
        } else {
            let unit: Vec<(f64, f64)> = f.iter().map(|&(x, w)| (x, w / mass)).collect();
            check_valid_1d(&unit, mode, tol)
        };
        LineReport { coordinate: *c, report }
    });
    let all_valid = lines.iter().all(|l| l.report.is_valid);
    MoveReport { lines, all_valid }
}

/// Whether mass at `z` may split into `targets` (coordinate, fraction):
/// `Σ fracᵢ/xᵢ ≤ 1/z` with fractions positive and summing to one.
pub fn split_feasible(z: f64, targets: &[(f64, f64)]) -> bool {
    let total: f64 = targets.iter().map(|t| t.1).sum();
    if targets.is_empty() || targets.iter().any(|t| t.1 <= 0.0) || (total - 1.0).abs() > 1e-12 {
        return false;
    }
    if z <= 0.0 {
        return targets.iter().all(|t| t.0 >= 0.0);
    }
    if targets.iter().any(|t| t.0 <= 0.0) {
        return false;
    }
    let harmonic: f64 = targets.iter().map(|&(x, p)| p / x).sum();
    harmonic <= (1.0 / z) * (1.0 + 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::points::transpose;

    fn merge() -> Vec<(f64, f64)> {
        vec![(1.0, 1.0), (0.0, -0.5), (2.0, -0.5)]
    }

    #[test]
    fn zero_and_merge_are_valid() {
        assert!(check_valid_1d(&[], &SweepMode::dense(), SELF_TOL).is_valid);
        assert!(check_valid_1d(&merge(), &SweepMode::dense(), SELF_TOL).is_valid);
    }

    #[test]
    fn reverse_split_fails_at_one() {
        let f: Vec<_> = merge().into_iter().map(|(x, w)| (x, -w)).collect();
        let r = check_valid_1d(&f, &SweepMode::Grid(vec![1.0]), SELF_TOL);
        assert!(!r.is_valid);
        assert!((r.worst_value + 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn grid_mode_ignores_moment() {
        // nonnegative profile at small λ, negative first moment
        let f = [(0.5, -1.0), (1.0, 2.0), (3.0, -1.0)];
        let t = check_valid_1d(&f, &SweepMode::Grid(vec![1e-3]), 1e-12);
        let d = check_valid_1d(&f, &SweepMode::dense(), 1e-12);
        assert!(t.is_valid);
        assert_eq!(t.first_moment, d.first_moment);
        assert!(t.first_moment < 0.0);
        assert!(!d.is_valid);
    }

    #[test]
    fn eta_validity() {
        let eta = 1e-3;
        assert!(check_eta_valid(&merge(), eta));
        assert!(check_eta_valid(&[(1.0, -eta / 2.0)], eta));
        assert!(!check_valid_1d(&[(1.0, -eta / 2.0)], &SweepMode::dense(), 0.0).is_valid);
        assert!(!check_eta_valid(&[(1.0, -2.0 * eta)], eta));
    }

    #[test]
    fn transitions() {
        let g = Configuration::from_points([
            crate::points::PointMass::new(0.0, 3.0, 0.5),
            crate::points::PointMass::new(2.0, 3.0, 0.5),
        ])
        .unwrap();
        assert!(check_transition(&g, &g, Axis::Horizontal, SELF_TOL).all_valid);
        let merged = Configuration::from_points([crate::points::PointMass::new(1.0, 3.0, 1.0)]).unwrap();
        assert!(check_transition(&g, &merged, Axis::Horizontal, SELF_TOL).all_valid);
        assert!(!check_transition(&merged, &g, Axis::Horizontal, SELF_TOL).all_valid);
        // a horizontal merge is not a vertical move
        assert!(!check_transition(&g, &merged, Axis::Vertical, SELF_TOL).all_valid);
        let raised = Configuration::from_points([
            crate::points::PointMass::new(0.0, 4.0, 0.5),
            crate::points::PointMass::new(2.0, 3.0, 0.5),
        ])
        .unwrap();
        assert!(check_transition(&g, &raised, Axis::Vertical, SELF_TOL).all_valid);
    }

    #[test]
    fn h_and_v_duality() {
        let m = Move::from_triples(&[(1.0, 5.0, 1.0), (0.0, 5.0, -0.5), (2.0, 5.0, -0.5)]).unwrap();
        assert!(check_h_valid(&m, &SweepMode::dense(), SELF_TOL).all_valid);
        assert!(check_v_valid(&transpose(&m), &SweepMode::dense(), SELF_TOL).all_valid);
        assert!(!check_v_valid(&m, &SweepMode::dense(), SELF_TOL).all_valid);
    }

    #[test]
    fn splits() {
        assert!(split_feasible(1.0, &[(2.0 / 3.0, 0.5), (2.0, 0.5)]));
        assert!(split_feasible(1.0, &[(1.0, 1.0)]));
        assert!(!split_feasible(1.0, &[(0.5, 0.5), (2.0, 0.5)]));
    }
}
