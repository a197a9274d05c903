//! Reference protocols for the comparison tables: cheat-penalised
//! Spekkens-Rudolph, Dip-Dip-Boom and ABDR04.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::convert::ConversionReport;
use crate::par::{self, Mode};
use crate::points::{Configuration, PointMass};
use crate::validity::{check_transition, Axis, SELF_TOL};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("lambda = {lambda} outside the domain of {name} ({requirement})")]
    Domain { name: &'static str, lambda: f64, requirement: &'static str },
    #[error("{0}")]
    Solver(String),
}

/// How `reward` relates to `bias`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RewardConvention {
    /// Win `Λ+1`, lose `Λ`, caught `0`: `bias = reward − Λ − ½`.
    Translated,
    /// Win `1`, lose `0`, caught `−Λ`: `bias = reward − ½`.
    Mochon,
    /// Winning probability: `bias = reward − ½`.
    Probability,
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineResult {
    pub name: String,
    pub lambda: f64,
    pub bias: f64,
    pub reward: f64,
    pub convention: RewardConvention,
    /// `None` for protocols defined only in the infinite-round limit.
    pub rounds: Option<u128>,
    pub qubits: Option<u32>,
    pub aux: BTreeMap<String, f64>,
}

/// Spekkens-Rudolph chain for a given `p`, with the split tight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrCandidate {
    pub p: f64,
    pub z1: f64,
    pub z2: f64,
}

impl SrCandidate {
    /// Solves `1/(2w) = p/z₁ + (½−p)/z₂` with `z₁ = (v/2 + (½−p)z₂)/(1−p)` for `z₂`.
    pub fn new(lambda: f64, p: f64) -> Option<SrCandidate> {
        if !(p > 0.0 && p < 0.5) || !(lambda >= 0.0) {
            return None;
        }
        let (w, v) = (lambda + 1.0, lambda);
        let a = 0.5 - p;
        let c = 0.5 / w;
        // c·a·z² + (c·v/2 − p(1−p) − a²)·z − a·v/2 = 0
        let qa = c * a;
        let qb = c * v / 2.0 - p * (1.0 - p) - a * a;
        let qc = -a * v / 2.0;
        let r = (qb * qb - 4.0 * qa * qc).sqrt();
        let z2 = if qb <= 0.0 { (r - qb) / (2.0 * qa) } else { 2.0 * (-qc) / (qb + r) };
        let z1 = (v / 2.0 + a * z2) / (1.0 - p);
        (z2.is_finite() && z2 > 0.0).then_some(SrCandidate { p, z1, z2 })
    }

    pub fn reward(&self, lambda: f64) -> f64 {
        self.z1.max(self.final_y(lambda))
    }

    fn final_y(&self, lambda: f64) -> f64 {
        (1.0 - self.p) * (lambda + 1.0) + self.p * lambda
    }

    /// The five frames of the chain: split H, raise V, merge H, merge V.
    pub fn frames(&self, lambda: f64) -> Vec<Configuration> {
        let (w, v) = (lambda + 1.0, lambda);
        let (p, z1, z2) = (self.p, self.z1, self.z2);
        let cfg = |pts: Vec<PointMass>| Configuration::from_points(pts).expect("positive weights");
        vec![
            cfg(vec![PointMass::new(v, w, 0.5), PointMass::new(w, v, 0.5)]),
            cfg(vec![PointMass::new(v, w, 0.5), PointMass::new(z1, v, p), PointMass::new(z2, v, 0.5 - p)]),
            cfg(vec![PointMass::new(v, w, 0.5), PointMass::new(z1, v, p), PointMass::new(z2, w, 0.5 - p)]),
            cfg(vec![PointMass::new(z1, w, 1.0 - p), PointMass::new(z1, v, p)]),
            cfg(vec![PointMass::new(z1, self.final_y(lambda), 1.0)]),
        ]
    }

    pub const AXES: [Axis; 4] = [Axis::Horizontal, Axis::Vertical, Axis::Horizontal, Axis::Vertical];

    /// Whether every transition of the chain passes [`check_transition`].
    pub fn chain_valid(&self, lambda: f64, tol: f64) -> bool {
        let f = self.frames(lambda);
        Self::AXES
            .iter()
            .enumerate()
            .all(|(i, &ax)| check_transition(&f[i], &f[i + 1], ax, tol).all_valid)
    }
}

const SR_GRID: usize = 2000;

/// Cheat-penalised Spekkens-Rudolph point game: minimises
/// `max(z₁, (1−p)w + pv)` over `p` and replays the optimum through the
/// validity checks.
pub fn sr_solve(lambda: f64) -> Result<BaselineResult, BaselineError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(BaselineError::Domain { name: "SR", lambda, requirement: "lambda >= 0" });
    }
    let reward = |p: f64| SrCandidate::new(lambda, p).map_or(f64::INFINITY, |c| c.reward(lambda));
    let step = 0.5 / SR_GRID as f64;
    let best = (1..SR_GRID)
        .map(|i| i as f64 * step)
        .min_by(|a, b| reward(*a).total_cmp(&reward(*b)))
        .expect("non-empty grid");
    let p = golden_min(reward, (best - step).max(step * 1e-3), (best + step).min(0.5 - step * 1e-3));
    let cand = SrCandidate::new(lambda, p).ok_or_else(|| BaselineError::Solver(format!("no chain at p = {p}")))?;
    if !(cand.z1 < cand.z2) {
        return Err(BaselineError::Solver(format!("z1 = {} not below z2 = {}", cand.z1, cand.z2)));
    }
    if !cand.chain_valid(lambda, SELF_TOL) {
        return Err(BaselineError::Solver(format!("chain at p = {p} fails the validity check")));
    }
    let r = cand.reward(lambda);
    let aux = BTreeMap::from([("p".to_string(), cand.p), ("z1".to_string(), cand.z1), ("z2".to_string(), cand.z2)]);
    Ok(BaselineResult {
        name: "SR".into(),
        lambda,
        bias: r - lambda - 0.5,
        reward: r,
        convention: RewardConvention::Translated,
        rounds: Some(8),
        qubits: Some(6),
        aux,
    })
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > 1e-15 * hi.abs().max(1e-300) {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
        if !(c < d) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `H_Λ(z) = Λ(Λ−2z) + 2z²·log(1+Λ/z)`.
pub fn ddb_h(lambda: f64, z: f64) -> f64 {
    lambda * (lambda - 2.0 * z) + 2.0 * z * z * (lambda / z).ln_1p()
}

/// `H_Λ(z) = Λ³/(Λ+1)` divided by `2Λ²` and written in `u = z − ½`.
fn ddb_u_residual(lambda: f64, u: f64) -> f64 {
    let z = 0.5 + u;
    u - z * z / lambda * (lambda / z).ln_1p() + 0.5 / (lambda + 1.0)
}

/// Unique root `R*` of `H_Λ(z) = Λ³/(Λ+1)` (win 1, lose 0, caught −Λ).
pub fn ddb_reward(lambda: f64) -> Result<f64, BaselineError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(BaselineError::Domain { name: "DDB", lambda, requirement: "lambda > 0" });
    }
    let f = |u: f64| ddb_u_residual(lambda, u);
    let lo = -0.5 + 1e-12 * lambda.min(1.0);
    let mut hi = 0.5f64.max(lambda * lambda);
    if !(f(lo) < 0.0) {
        return Err(BaselineError::Solver(format!("no sign change at z = 0+ for lambda = {lambda}")));
    }
    let mut tries = 0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(BaselineError::Solver(format!("bracketing failed for lambda = {lambda}")));
        }
    }
    let mut conv = roots::SimpleConvergency { eps: 1e-17, max_iter: 500 };
    let u = roots::find_root_brent(lo, hi, f, &mut conv)
        .map_err(|e| BaselineError::Solver(format!("brent: {e:?}")))?;
    Ok(0.5 + u)
}

/// `|H_Λ(R) − Λ³/(Λ+1)| / (Λ³/(Λ+1))`.
pub fn ddb_relative_residual(lambda: f64, r: f64) -> f64 {
    let rhs = lambda.powi(3) / (lambda + 1.0);
    (ddb_h(lambda, r) - rhs).abs() / rhs
}

pub fn ddb_result(lambda: f64) -> Result<BaselineResult, BaselineError> {
    let r = ddb_reward(lambda)?;
    let aux = BTreeMap::from([("relative_residual".to_string(), ddb_relative_residual(lambda, r))]);
    Ok(BaselineResult {
        name: "DDB".into(),
        lambda,
        bias: r - 0.5,
        reward: r,
        convention: RewardConvention::Mochon,
        rounds: None,
        qubits: None,
        aux,
    })
}

/// Large-`Λ` series of [`ddb_reward`] to order 1 or 2.
pub fn ddb_asymptotic(lambda: f64, order: u8) -> Result<f64, BaselineError> {
    if !(lambda > 1.0) {
        return Err(BaselineError::Domain { name: "DDB series", lambda, requirement: "lambda > 1" });
    }
    match order {
        1 => Ok(0.5 + lambda.ln() / (4.0 * lambda)),
        2 => {
            let l2 = (2.0 * lambda).ln();
            Ok(0.5 + (0.25 * l2 - 0.5) / lambda + (0.25 * l2 * l2 - 0.625 * l2 + 0.875) / (lambda * lambda))
        }
        _ => Err(BaselineError::Solver(format!("series order {order} not available"))),
    }
}

/// ABDR04: reward `½ + 1/√Λ` for `Λ ≥ 4`.
pub fn abdr_reward(lambda: f64) -> Result<BaselineResult, BaselineError> {
    if !(lambda >= 4.0 && lambda.is_finite()) {
        return Err(BaselineError::Domain { name: "ABDR", lambda, requirement: "lambda >= 4" });
    }
    let bias = 1.0 / lambda.sqrt();
    Ok(BaselineResult {
        name: "ABDR".into(),
        lambda,
        bias,
        reward: 0.5 + bias,
        convention: RewardConvention::Probability,
        rounds: Some(3),
        qubits: Some(4),
        aux: BTreeMap::new(),
    })
}

/// A converted game to list next to the baselines.
#[derive(Debug, Clone)]
pub struct GameEntry {
    pub name: String,
    pub lambda: f64,
    pub report: ConversionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub protocol: String,
    pub lambda: f64,
    pub bias: f64,
    pub rc: Option<u128>,
    pub sc: Option<u32>,
}

/// Baseline rows for every `Λ` (skipping baselines outside their domain),
/// followed by one row per game.
pub fn compare_table(lambdas: &[f64], games: &[GameEntry]) -> Vec<CompareRow> {
    let per_lambda = par::map(Mode::Parallel, lambdas, |&l| {
        [sr_solve(l), ddb_result(l), abdr_reward(l)]
            .into_iter()
            .filter_map(Result::ok)
            .map(|b| CompareRow { protocol: b.name, lambda: b.lambda, bias: b.bias, rc: b.rounds, sc: b.qubits })
            .collect::<Vec<_>>()
    });
    let mut rows: Vec<CompareRow> = per_lambda.into_iter().flatten().collect();
    rows.extend(games.iter().map(|g| CompareRow {
        protocol: g.name.clone(),
        lambda: g.lambda,
        bias: g.report.protocol_bias,
        rc: Some(g.report.rc),
        sc: Some(g.report.sc),
    }));
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sr_without_penalty() {
        let r = sr_solve(0.0).unwrap();
        assert_abs_diff_eq!(r.bias, 0.5f64.sqrt() - 0.5, epsilon = 1e-9);
        assert_eq!((r.rounds, r.qubits), (Some(8), Some(6)));
    }

    #[test]
    fn sr_candidates_satisfy_constraints() {
        for &l in &[0.0, 1.0, 6.0] {
            for i in 1..20 {
                let c = SrCandidate::new(l, i as f64 * 0.025).unwrap();
                let split = c.p / c.z1 + (0.5 - c.p) / c.z2;
                assert_abs_diff_eq!(split, 0.5 / (l + 1.0), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn ddb_bracket_endpoints() {
        let l = 3.0;
        assert!((ddb_h(l, 1e-12) - l * l).abs() < 1e-9);
        assert!(ddb_h(l, 1e9) < 1e-6 * l * l);
        let r = ddb_reward(l).unwrap();
        assert!(ddb_relative_residual(l, r) <= 1e-10);
    }

    #[test]
    fn ddb_bias_decreases() {
        let biases: Vec<f64> = (1..=8).map(|k| ddb_reward(10f64.powi(k)).unwrap() - 0.5).collect();
        assert!(biases.windows(2).all(|w| w[1] < w[0]), "{biases:?}");
    }

    #[test]
    fn abdr_domain() {
        assert_eq!(abdr_reward(4.0).unwrap().bias, 0.5);
        assert_eq!(abdr_reward(100.0).unwrap().bias, 0.1);
        assert!(matches!(abdr_reward(3.9), Err(BaselineError::Domain { .. })));
    }

    #[test]
    fn compare_without_games() {
        let rows = compare_table(&[6.0], &[]);
        let names: Vec<_> = rows.iter().map(|r| r.protocol.as_str()).collect();
        assert_eq!(names, ["SR", "DDB", "ABDR"]);
    }
}
