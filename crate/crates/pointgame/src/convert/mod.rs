//! From an approximate penalised TIPG to an exact time-dependent point game
//! and protocol resource counts.
//!
//! [`decompose_boundary`] splits the boundary of a game into its ideal and
//! error parts, [`conversion_params`] evaluates the closed-form conversion
//! parameters, [`conversion_report`] turns them into error, rounds and qubits,
//! and [`expand::expand_tdpg`] builds the frames themselves.

pub mod expand;

use serde::Serialize;
use thiserror::Error;

use crate::par::{self, Mode};
use crate::points::{
    l1_norm, max_coordinate, min_any_coordinate, min_coordinate, split_signs, support_union, Configuration,
    CoreError, Move, PointMass, ZERO_TOL,
};
use crate::search::PenTipg;

pub use expand::{expand_tdpg, expand_tdpg_report, expansion_params, ExpandOptions, Materialize, TdpgExpansion};

/// Relative distance within which a support point is identified with an ideal
/// boundary point.
const MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ConvertError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("inconsistent game: {0}")]
    Inconsistent(String),
    #[error("penalty must be positive for conversion (got {0})")]
    ZeroPenalty(f64),
    #[error("c1 = {c1} outside the admissible interval (0, {sup})")]
    C1OutOfRange { c1: f64, sup: f64 },
    #[error("delta = {delta} outside (delta_min, 1) with delta_min = {delta_min}")]
    DeltaOutOfRange { delta: f64, delta_min: f64 },
    #[error("formula breakdown: {0}")]
    Formula(String),
    #[error("expansion step `{step}`: {detail}")]
    Expansion { step: String, detail: String },
    #[error("loop of {iterations} iterations exceeds the materialisation cap {cap}")]
    LoopTooLong { iterations: u64, cap: u64 },
}

/// Which minimum coordinate feeds the conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum M1Rule {
    /// `min{mincoordinate(s_error), mincoordinate(h⁻)}`.
    #[default]
    Targets,
    /// `min{mincoordinate(h), mincoordinate(v)}`.
    Support,
    /// Smallest single coordinate over `supp(h⁻) ∪ supp(s_error)`; what the
    /// explicit expansion needs for its raises.
    AllCoordinates,
}

/// Conditions worth a second look that do not stop the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ParamFlag {
    /// `m1 ≤ Λ`: the `w1±` denominator is not positive.
    M1BelowLambda,
}

/// `s = (1−ε₁)s_ideal + ε₁·s_error`, `e = (1−ε₂)e_ideal + ε₂·e_error` after
/// normalising the game so that `s` and `e` are probability distributions.
#[derive(Debug, Clone)]
pub struct BoundaryDecomposition {
    pub lambda: f64,
    pub eps_approx: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub s_error: Configuration,
    pub e_error: Configuration,
    /// Final point `(β, α)`.
    pub beta: f64,
    pub alpha: f64,
    /// Ideal start points `(Λ, Λ+1)` as they appear in the support.
    pub start_low: f64,
    pub start_high: f64,
    /// Mass of the negative part of `h* + v*` before normalisation.
    pub kappa: f64,
    pub s: Configuration,
    pub e: Configuration,
    pub h: Move,
    pub v: Move,
    pub point_count: usize,
}

impl BoundaryDecomposition {
    pub fn s_ideal(&self) -> Configuration {
        Configuration::from_points([
            PointMass::new(self.start_low, self.start_high, 0.5),
            PointMass::new(self.start_high, self.start_low, 0.5),
        ])
        .expect("positive weights")
    }

    pub fn e_ideal(&self) -> Configuration {
        Configuration::from_points([PointMass::new(self.beta, self.alpha, 1.0)]).expect("positive weight")
    }

    pub fn h_minus(&self) -> Configuration {
        split_signs(&self.h).1
    }

    pub fn m1(&self, rule: M1Rule) -> Result<f64, ConvertError> {
        let hm = self.h_minus();
        let m = match rule {
            M1Rule::Targets => {
                let mut m = min_coordinate(&hm)?;
                if !self.s_error.is_empty() {
                    m = m.min(min_coordinate(&self.s_error)?);
                }
                m
            }
            M1Rule::Support => min_coordinate(&self.h)?.min(min_coordinate(&self.v)?),
            M1Rule::AllCoordinates => {
                let mut m = min_any_coordinate(&hm)?;
                if !self.s_error.is_empty() {
                    m = m.min(min_any_coordinate(&self.s_error)?);
                }
                m
            }
        };
        Ok(m)
    }
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= MATCH_TOL * a.abs().max(b.abs()).max(1e-300)
}

fn weight_near(m: &Move, x: f64, y: f64) -> Option<PointMass> {
    m.points().find(|p| near(p.x, x) && near(p.y, y))
}

/// Splits the boundary `h* + v* = e − s` of a game into ideal and error parts.
pub fn decompose_boundary(game: &PenTipg) -> Result<BoundaryDecomposition, ConvertError> {
    if !(game.eps_approx < 1.0) {
        return Err(ConvertError::Inconsistent(format!("eps_approx = {} is not below 1", game.eps_approx)));
    }
    let lambda = game.lambda;
    let (beta, alpha) = game.final_point;
    let g = (&game.h_star + &game.v_star).canonical(ZERO_TOL);
    let (e_raw, s_raw) = split_signs(&g);
    let kappa = l1_norm(&s_raw);
    if kappa <= 0.0 {
        return Err(ConvertError::Inconsistent("h* + v* has no negative part".into()));
    }
    let s = Configuration::clip(&s_raw.scale(1.0 / kappa));
    let e = Configuration::clip(&e_raw.scale(1.0 / kappa));
    let h = game.h_star.scale(1.0 / kappa);
    let v = game.v_star.scale(1.0 / kappa);

    let lo = weight_near(&s, lambda, lambda + 1.0);
    let hi = weight_near(&s, lambda + 1.0, lambda);
    let (lo, hi) = match (lo, hi) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(ConvertError::Inconsistent(format!(
                "start support misses an ideal point ({lambda}, {}) or its mirror",
                lambda + 1.0
            )))
        }
    };
    let end = weight_near(&e, beta, alpha)
        .ok_or_else(|| ConvertError::Inconsistent(format!("end support misses the final point ({beta}, {alpha})")))?;

    let ideal_share = (2.0 * lo.w.min(hi.w)).min(1.0);
    let eps1 = (1.0 - ideal_share).max(0.0);
    let eps2 = (1.0 - end.w.min(1.0)).max(0.0);
    let bound = 2.0 * game.eps_approx + 1e-12;
    for (name, val) in [("eps1", eps1), ("eps2", eps2)] {
        if val > bound || val >= 1.0 {
            return Err(ConvertError::Inconsistent(format!(
                "{name} = {val} exceeds the approximation bound {bound}"
            )));
        }
    }
    let s_ideal = Move::from_points([
        PointMass::new(lo.x, lo.y, 0.5 * ideal_share),
        PointMass::new(hi.x, hi.y, 0.5 * ideal_share),
    ])?;
    let e_ideal = Move::point(end.x, end.y, 1.0 - eps2)?;
    let s_error = error_part(&s, &s_ideal, eps1);
    let e_error = error_part(&e, &e_ideal, eps2);
    Ok(BoundaryDecomposition {
        lambda,
        eps_approx: game.eps_approx,
        eps1,
        eps2,
        s_error,
        e_error,
        beta: end.x,
        alpha: end.y,
        start_low: lo.x,
        start_high: hi.x,
        kappa,
        s,
        e,
        h,
        v,
        point_count: support_union(&[&game.h_star, &game.v_star]),
    })
}

fn error_part(full: &Move, ideal: &Move, eps: f64) -> Configuration {
    if eps <= 0.0 {
        return Configuration::clip(&Move::new());
    }
    let rest = (full - ideal).canonical(ZERO_TOL);
    Configuration::clip(&rest.scale(1.0 / eps))
}

/// `(0, m1²/((Λ+1)Λ))`.
pub fn admissible_c1(m1: f64, lambda: f64) -> Result<(f64, f64), ConvertError> {
    if !(m1 > 0.0) {
        return Err(ConvertError::Formula(format!("m1 = {m1} must be positive")));
    }
    if !(lambda > 0.0) {
        return Err(ConvertError::ZeroPenalty(lambda));
    }
    Ok((0.0, m1 * m1 / ((lambda + 1.0) * lambda)))
}

/// Default `c1`: just below the supremum of the admissible interval.
pub fn default_c1(m1: f64, lambda: f64) -> Result<f64, ConvertError> {
    Ok(0.999 * admissible_c1(m1, lambda)?.1)
}

/// `δ_min = (1−ε₂)·c₃ε₁/(1+c₃ε₁) + ε₂` with `c₃ = 1/c₁ − 1`.
pub fn delta_min(eps1: f64, eps2: f64, c1: f64) -> f64 {
    let c3 = 1.0 / c1 - 1.0;
    (1.0 - eps2) * c3 * eps1 / (1.0 + c3 * eps1) + eps2
}

/// `δ_clyst = 1 − ((1−ε₁) + ε₁/c₁)·(1−δ)/(1−ε₂)`.
pub fn delta_clyst(eps1: f64, eps2: f64, c1: f64, delta: f64) -> f64 {
    1.0 - ((1.0 - eps1) + eps1 / c1) * (1.0 - delta) / (1.0 - eps2)
}

/// `η₁ = 1 − c₁(1−δ_clyst)/(c₁(1−ε₁)+ε₁)`.
pub fn eta1(eps1: f64, c1: f64, delta_clyst: f64) -> f64 {
    1.0 - c1 * (1.0 - delta_clyst) / (c1 * (1.0 - eps1) + eps1)
}

/// Inverse of [`delta_clyst`]: `δ = (1−ε₂)η₁ + ε₂`.
pub fn delta_from_clyst(eps1: f64, eps2: f64, c1: f64, delta_clyst: f64) -> f64 {
    (1.0 - eps2) * eta1(eps1, c1, delta_clyst) + eps2
}

/// `w1±`; `None` when the discriminant is negative. `w1⁻` is evaluated in
/// the rationalised form `4c₁Λ(m₁−Λ−1)/(√disc + m₁)`, which stays finite at
/// `m₁ = Λ` where `w1⁺` diverges.
pub fn w1_pair(c1: f64, m1: f64, lambda: f64) -> Option<(f64, f64)> {
    let l = lambda;
    let disc = m1 * m1 + 8.0 * c1 * l * (l + 1.0) * (m1 - l) * (m1 - l - 1.0);
    if disc < 0.0 {
        return None;
    }
    let r = disc.sqrt();
    let minus = 4.0 * c1 * l * (m1 - l - 1.0) / (r + m1);
    let plus = (r + m1) / (2.0 * (l + 1.0) * (m1 - l));
    Some((minus, plus))
}

/// `(1−w₁)·|1/(Λ+1) − w₁/m₁|⁻¹`.
pub fn m2_candidate(w1: f64, m1: f64, lambda: f64) -> f64 {
    (1.0 - w1) / (1.0 / (lambda + 1.0) - w1 / m1).abs()
}

#[derive(Debug, Clone, Serialize)]
pub struct ConversionParams {
    pub lambda: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub c1: f64,
    pub c3: f64,
    pub m1: f64,
    pub m1_rule: M1Rule,
    pub delta: f64,
    pub delta_min: f64,
    pub w1_minus: f64,
    pub w1_plus: f64,
    /// The `w1` attaining `m̃₂`.
    pub w1: f64,
    pub w2: f64,
    pub m2_tilde: f64,
    pub m2: f64,
    pub delta_clyst: f64,
    pub delta_sfix: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub h_minus_norm: f64,
    pub flags: Vec<ParamFlag>,
}

pub fn conversion_params(
    d: &BoundaryDecomposition,
    c1: f64,
    delta: f64,
    rule: M1Rule,
) -> Result<ConversionParams, ConvertError> {
    let lambda = d.lambda;
    let m1 = d.m1(rule)?;
    let (_, sup) = admissible_c1(m1, lambda)?;
    if !(c1 > 0.0 && c1 < sup) {
        return Err(ConvertError::C1OutOfRange { c1, sup });
    }
    let dmin = delta_min(d.eps1, d.eps2, c1);
    if !(delta > dmin && delta < 1.0) {
        return Err(ConvertError::DeltaOutOfRange { delta, delta_min: dmin });
    }
    let mut flags = Vec::new();
    if m1 <= lambda {
        flags.push(ParamFlag::M1BelowLambda);
    }
    let (w1_minus, w1_plus) =
        w1_pair(c1, m1, lambda).ok_or_else(|| ConvertError::Formula("negative w1 discriminant".into()))?;
    let (w1, m2_tilde) = [w1_minus, w1_plus]
        .into_iter()
        .map(|w| (w, m2_candidate(w, m1, lambda)))
        .filter(|(_, m)| m.is_finite() && *m > 0.0)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| ConvertError::Formula("no positive m2 candidate".into()))?;
    let m2 = max_coordinate(&d.h)?.max(m2_tilde);
    let h_minus_norm = l1_norm(&d.h_minus());
    if h_minus_norm <= 0.0 {
        return Err(ConvertError::Inconsistent("h has no negative part".into()));
    }
    let dc = delta_clyst(d.eps1, d.eps2, c1, delta);
    if !(dc > 0.0 && dc < 1.0) {
        return Err(ConvertError::Formula(format!("delta_clyst = {dc} outside (0, 1)")));
    }
    let base = c1 * (1.0 - d.eps1) + d.eps1;
    let delta_sfix = if d.eps1 > 0.0 { d.eps1 * (1.0 - dc) / base } else { 0.0 };
    let e1 = eta1(d.eps1, c1, dc);
    let eta2 = dc / h_minus_norm * base / (1.0 - dc);
    let eta3 = 1.0 - (1.0 - e1) * (1.0 + eta2 * h_minus_norm);
    Ok(ConversionParams {
        lambda,
        eps1: d.eps1,
        eps2: d.eps2,
        alpha: d.alpha,
        beta: d.beta,
        c1,
        c3: 1.0 / c1 - 1.0,
        m1,
        m1_rule: rule,
        delta,
        delta_min: dmin,
        w1_minus,
        w1_plus,
        w1,
        w2: 2.0 * c1 / w1,
        m2_tilde,
        m2,
        delta_clyst: dc,
        delta_sfix,
        eta1: e1,
        eta2,
        eta3,
        h_minus_norm,
        flags,
    })
}

impl ConversionParams {
    /// `δ_max(ε) = ε²/((m₂−α)(m₂−β))`.
    pub fn delta_max(&self, eps: f64) -> f64 {
        delta_max(eps, self.m2, self.alpha, self.beta)
    }

    /// `err = √(δ(m₂−α)(m₂−β))`.
    pub fn err(&self) -> f64 {
        err_for_delta(self.delta, self.m2, self.alpha, self.beta)
    }
}

pub fn delta_max(eps: f64, m2: f64, alpha: f64, beta: f64) -> f64 {
    eps * eps / ((m2 - alpha) * (m2 - beta))
}

pub fn err_for_delta(delta: f64, m2: f64, alpha: f64, beta: f64) -> f64 {
    (delta * (m2 - alpha) * (m2 - beta)).sqrt()
}

/// `3·⌈log₂(2μ+1)⌉`.
pub fn qubits(mu: usize) -> u32 {
    let n = 2 * mu as u64 + 1;
    3 * (u64::BITS - (n - 1).leading_zeros())
}

#[derive(Debug, Clone, Serialize)]
pub struct ConversionReport {
    pub err: f64,
    /// `10 + 2/η₂`.
    pub n_steps: f64,
    /// `2·⌈n⌉`.
    pub rc: u128,
    pub mu: usize,
    pub sc: u32,
    pub protocol_bias: f64,
    /// `δ_max(err)`; equals `δ` up to rounding.
    pub delta_max: f64,
}

pub fn conversion_report(d: &BoundaryDecomposition, p: &ConversionParams) -> ConversionReport {
    let err = p.err();
    let n_steps = 10.0 + 2.0 / p.eta2;
    ConversionReport {
        err,
        n_steps,
        rc: rounds(n_steps),
        mu: d.point_count,
        sc: qubits(d.point_count),
        protocol_bias: d.beta.max(d.alpha) + err - d.lambda - 0.5,
        delta_max: p.delta_max(err),
    }
}

fn rounds(n: f64) -> u128 {
    if n.is_finite() && n < 1.7e38 {
        2 * n.ceil() as u128
    } else {
        u128::MAX
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TradeoffRow {
    pub delta: f64,
    pub err: f64,
    pub rc: u128,
    pub protocol_bias: f64,
}

/// One report row per `δ`, in the order given.
pub fn tradeoff_curve(
    d: &BoundaryDecomposition,
    c1: f64,
    rule: M1Rule,
    deltas: &[f64],
    mode: Mode,
) -> Result<Vec<TradeoffRow>, ConvertError> {
    par::map(mode, deltas, |&delta| {
        let p = conversion_params(d, c1, delta, rule)?;
        let r = conversion_report(d, &p);
        Ok(TradeoffRow { delta, err: r.err, rc: r.rc, protocol_bias: r.protocol_bias })
    })
    .into_iter()
    .collect()
}

/// `δ` at which the protocol bias equals `target`, or `None` when the final
/// point alone already exceeds it.
pub fn delta_for_bias(d: &BoundaryDecomposition, m2: f64, target: f64) -> Option<f64> {
    let err = target - (d.beta.max(d.alpha) - d.lambda - 0.5);
    (err > 0.0).then(|| delta_max(err, m2, d.alpha, d.beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn qubit_count() {
        assert_eq!(qubits(64), 24);
        assert_eq!(qubits(63), 21);
        assert_eq!(qubits(1), 6);
    }

    #[test]
    fn c1_interval() {
        let (lo, hi) = admissible_c1(0.3, 1.0).unwrap();
        assert_eq!(lo, 0.0);
        assert_relative_eq!(hi, 0.045, max_relative = 1e-15);
        assert_relative_eq!(admissible_c1(2.0, 2.0).unwrap().1, 2.0 / 3.0, max_relative = 1e-15);
        assert!(matches!(admissible_c1(0.3, 0.0), Err(ConvertError::ZeroPenalty(_))));
    }

    #[test]
    fn exact_game_has_zero_delta_min() {
        assert_eq!(delta_min(0.0, 0.0, 0.2), 0.0);
        let d = 1e-4;
        assert_relative_eq!(delta_clyst(0.0, 0.0, 0.2, d), d, max_relative = 1e-12);
    }

    #[test]
    fn w1_forms_agree() {
        for &(c1, m1, l) in &[(0.2448, 0.7, 1.0), (0.3, 2.5, 1.0), (0.004, 0.007, 0.01)] {
            let disc: f64 = 8.0 * c1 * l * l * (l + 1.0) * (l + 1.0) + m1 * m1 * (8.0 * c1 * l * (l + 1.0) + 1.0)
                - 8.0 * c1 * l * (2.0 * l * l + 3.0 * l + 1.0) * m1;
            let den = 2.0 * (l + 1.0) * (m1 - l);
            let (wm, wp) = w1_pair(c1, m1, l).unwrap();
            assert_relative_eq!(wm, (disc.sqrt() - m1) / den, max_relative = 1e-10);
            assert_relative_eq!(wp, (disc.sqrt() + m1) / den, max_relative = 1e-10);
        }
        let (wm, wp) = w1_pair(0.2, 1.0, 1.0).unwrap();
        assert!(wm.is_finite() && wp.is_infinite());
    }

    #[test]
    fn w1_minus_vanishes_with_c1() {
        let (wm, _) = w1_pair(1e-14, 0.7, 1.0).unwrap();
        assert!(wm.abs() < 1e-12, "{wm}");
    }

    #[test]
    fn rounds_are_even() {
        assert_eq!(rounds(10.2), 22);
        assert_eq!(rounds(12.0), 24);
    }
}
