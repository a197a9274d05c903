//! Explicit TDPG frames for a converted game.
//!
//! The frame chain is: prologue (split part of `s_ideal` down to `[m1,m1]`
//! and up to `[m2,m2]`, then raise `[m1,m1]` into `s_error` and `h⁻`), the
//! catalysed loop `s + γh⁻ → e + γh⁻`, two raises of everything left over to
//! `[m2,m2]`, and a three-transition final merge. Transitions alternate
//! horizontal and vertical.

use serde::Serialize;

use super::{conversion_params, default_c1, BoundaryDecomposition, ConversionParams, ConvertError, M1Rule};
use crate::par::{self, Mode};
use crate::points::{l1_norm, min_any_coordinate, split_signs, support_count, Configuration, Move, PointMass, ZERO_TOL};
use crate::validity::{check_transition_with, Axis, MoveReport, SweepMode, SELF_TOL};

/// Remainders of `1/γ` below this fraction of `γ` count as zero.
const REMAINDER_TOL: f64 = 1e-9;
/// Most negative weight (relative to frame mass) tolerated before clipping.
const NEGATIVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Materialize {
    /// Every loop iteration.
    All,
    /// Iterations `0`, `1`, the last one, and the listed ones (clamped to the range).
    Sampled(Vec<u64>),
}

#[derive(Debug, Clone)]
pub struct ExpandOptions {
    pub materialize: Materialize,
    /// Largest loop length accepted with [`Materialize::All`].
    pub loop_cap: u64,
    pub tol: f64,
    pub sweep: SweepMode,
    pub par_mode: Mode,
}

impl Default for ExpandOptions {
    fn default() -> Self {
        ExpandOptions {
            materialize: Materialize::Sampled(Vec::new()),
            loop_cap: 100_000,
            tol: SELF_TOL,
            sweep: SweepMode::dense(),
            par_mode: Mode::Parallel,
        }
    }
}

/// Loop frames as affine functions of the iteration index `k`:
/// `A_k = σ((1−kγ)s + kγe + γh⁻) + bg` and `B_k = A_k + σω_k h` with
/// `ω_k = min(γ, 1−kγ)`.
#[derive(Debug, Clone)]
pub struct LoopTemplate {
    pub s: Move,
    pub e: Move,
    pub h: Move,
    pub h_minus: Move,
    pub gamma: f64,
    /// `σ = 1 − η₁`.
    pub scale: f64,
    pub background: Move,
    /// Full iterations `⌊1/γ⌋`.
    pub full_iterations: u64,
    /// `1 − ⌊1/γ⌋γ`, run as one extra partial iteration when nonzero.
    pub remainder: f64,
}

impl LoopTemplate {
    pub fn iterations(&self) -> u64 {
        self.full_iterations + u64::from(self.remainder > 0.0)
    }

    fn done(&self, k: u64) -> f64 {
        (k as f64 * self.gamma).min(1.0)
    }

    fn step(&self, k: u64) -> f64 {
        if k < self.full_iterations {
            self.gamma
        } else {
            self.remainder
        }
    }

    pub fn frame_a(&self, k: u64) -> Move {
        let done = if k >= self.iterations() { 1.0 } else { self.done(k) };
        let inner = &(&self.s.scale(1.0 - done) + &self.e.scale(done)) + &self.h_minus.scale(self.gamma);
        &inner.scale(self.scale) + &self.background
    }

    pub fn frame_b(&self, k: u64) -> Move {
        &self.frame_a(k) + &self.h.scale(self.scale * self.step(k))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TransitionReport {
    pub step: String,
    pub axis: Axis,
    pub valid: bool,
    /// Lowest unit-normalised profile value over the failing or checked lines.
    pub worst_value: f64,
    pub worst_lambda: f64,
    pub worst_line: f64,
    /// `|Σ after − 1|`.
    pub mass_error: f64,
    pub support: usize,
    /// Points in the frames before and after.
    pub pair_support: usize,
}

#[derive(Debug, Clone)]
pub struct TdpgExpansion {
    pub prologue_frames: Vec<Configuration>,
    pub loop_template: LoopTemplate,
    pub epilogue_frames: Vec<Configuration>,
    pub transitions: Vec<TransitionReport>,
    /// Split fractions out of `Λ+1` and `Λ` in the prologue.
    pub split: (f64, f64),
    pub err: f64,
    pub final_point: (f64, f64),
    /// `μ = supp{h*, v*}`, the bound on the points of any one frame.
    pub support_bound: usize,
    pub max_support: usize,
    /// Largest point count of two consecutive checked frames; the qubit
    /// count assumes it stays within `2μ`.
    pub max_pair_support: usize,
    pub max_mass_error: f64,
    /// `2·(number of transitions)` with the loop counted in full.
    pub total_transitions: u128,
}

impl TdpgExpansion {
    pub fn all_valid(&self) -> bool {
        self.transitions.iter().all(|t| t.valid)
    }

    pub fn within_support_bound(&self) -> bool {
        self.max_support <= self.support_bound
    }

    pub fn within_pair_bound(&self) -> bool {
        self.max_pair_support <= 2 * self.support_bound
    }

    pub fn first_failure(&self) -> Option<&TransitionReport> {
        self.transitions.iter().find(|t| !t.valid)
    }

    pub fn last_frame(&self) -> &Configuration {
        self.epilogue_frames.last().expect("epilogue is never empty")
    }
}

fn frame(m: &Move, step: &str) -> Result<Configuration, ConvertError> {
    let m = m.canonical(ZERO_TOL);
    let mass: f64 = m.points().map(|p| p.w.abs()).sum();
    if let Some(p) = m.points().find(|p| p.w < -NEGATIVE_TOL * mass.max(1.0)) {
        return Err(ConvertError::Expansion {
            step: step.into(),
            detail: format!("negative weight {} at ({}, {})", p.w, p.x, p.y),
        });
    }
    Ok(Configuration::clip(&m))
}

fn pt(x: f64, y: f64, w: f64) -> Move {
    if w == 0.0 {
        Move::new()
    } else {
        Move::point(x, y, w).expect("finite point")
    }
}

/// Largest fraction `a` with `a/m1 + (1−a)/m2 ≤ 1/z`, clamped to `[0, 1]`.
fn split_fraction(z: f64, m1: f64, m2: f64) -> f64 {
    if m1 >= z {
        return 1.0;
    }
    ((1.0 / z - 1.0 / m2) / (1.0 / m1 - 1.0 / m2)).clamp(0.0, 1.0)
}

/// Largest `c1 = a·b` the two-step symmetric split can deposit at `[m1,m1]`.
pub fn max_split_c1(lambda: f64, m1: f64, m2: f64) -> f64 {
    split_fraction(lambda + 1.0, m1, m2) * split_fraction(lambda, m1, m2)
}

/// Parameters for [`expand_tdpg`] with the all-coordinates `m1`. Without an
/// explicit `c1` the default is capped at `0.999·`[`max_split_c1`].
pub fn expansion_params(
    d: &BoundaryDecomposition,
    delta: f64,
    c1: Option<f64>,
) -> Result<ConversionParams, ConvertError> {
    let rule = M1Rule::AllCoordinates;
    if let Some(c1) = c1 {
        return conversion_params(d, c1, delta, rule);
    }
    let m1 = d.m1(rule)?;
    let c1 = default_c1(m1, d.lambda)?;
    let p = conversion_params(d, c1, delta, rule)?;
    let capped = c1.min(0.999 * max_split_c1(d.lambda, m1, p.m2));
    conversion_params(d, capped, delta, rule)
}

struct Check<'a> {
    opts: &'a ExpandOptions,
}

impl Check<'_> {
    fn run(&self, step: String, axis: Axis, g: &Configuration, h: &Configuration) -> TransitionReport {
        let rep: MoveReport = check_transition_with(g, h, axis, self.opts.tol, &self.opts.sweep, Mode::Sequential);
        let worst = rep.worst();
        TransitionReport {
            step,
            axis,
            valid: rep.all_valid,
            worst_value: worst.as_ref().map_or(0.0, |w| w.report.worst_value),
            worst_lambda: worst.as_ref().map_or(f64::NAN, |w| w.report.worst_lambda),
            worst_line: worst.as_ref().map_or(f64::NAN, |w| w.coordinate),
            mass_error: (h.total_weight() - 1.0).abs(),
            support: support_count(h),
            pair_support: support_count(g) + support_count(h),
        }
    }
}

/// Builds and checks the frames. Invalid transitions are reported, not raised.
pub fn expand_tdpg_report(
    d: &BoundaryDecomposition,
    p: &ConversionParams,
    opts: &ExpandOptions,
) -> Result<TdpgExpansion, ConvertError> {
    let lam = d.lambda;
    let (lo, hi) = (d.start_low, d.start_high);
    let (m1, m2) = (p.m1, p.m2);
    let (beta, alpha) = (d.beta, d.alpha);
    if !(m2 > beta.max(alpha)) {
        return Err(ConvertError::Expansion {
            step: "final merge".into(),
            detail: format!("m2 = {m2} must exceed the final point coordinates ({beta}, {alpha})"),
        });
    }

    // catalyst and error targets that [m1,m1] is raised into
    let h_minus = split_signs(&d.h).1.into_move();
    let c1 = p.c1;
    let targets = &d.s_error.scale(p.delta_sfix * c1) + &h_minus.scale(p.delta_clyst * c1 / p.h_minus_norm);
    let lowest = min_any_coordinate(&targets)?;
    if m1 > lowest * (1.0 + 1e-12) {
        return Err(ConvertError::Expansion {
            step: "prologue raise".into(),
            detail: format!("m1 = {m1} exceeds the smallest target coordinate {lowest}; use the all-coordinates m1"),
        });
    }
    let cap = max_split_c1(lam, m1, m2);
    if c1 > cap {
        return Err(ConvertError::Expansion {
            step: "prologue split".into(),
            detail: format!("c1 = {c1} exceeds the largest split deposit {cap} at m1 = {m1}, m2 = {m2}"),
        });
    }
    let (a_max, b_max) = (split_fraction(lam + 1.0, m1, m2), split_fraction(lam, m1, m2));
    let t = (c1 / (a_max * b_max)).sqrt();
    let (a, b) = (a_max * t, b_max * t);

    let taken = p.delta_sfix + p.delta_clyst;
    let half = 0.5 * taken;
    let s_ideal = d.s_ideal().into_move();
    let kept = s_ideal.scale(1.0 - taken);

    let p0 = s_ideal.clone();
    // horizontal: [Λ+1,Λ] → a[m1,Λ] + (1−a)[m2,Λ]; [Λ,Λ+1] → b[m1,Λ+1] + (1−b)[m2,Λ+1]
    let p1 = &kept
        + &(&(&pt(m1, lo, half * a) + &pt(m2, lo, half * (1.0 - a)))
            + &(&pt(m1, hi, half * b) + &pt(m2, hi, half * (1.0 - b))));
    // vertical: split on x = m1, raise on x = m2
    let at_m1m1 = half * (a * b + b * a);
    let at_m1m2 = half * (a * (1.0 - b) + b * (1.0 - a));
    let at_m2m2 = half * ((1.0 - a) + (1.0 - b));
    let p2 = &kept + &(&(&pt(m1, m1, at_m1m1) + &pt(m1, m2, at_m1m2)) + &pt(m2, m2, at_m2m2));
    // horizontal: raise [m1,m1] to the target x coordinates, [m1,m2] to [m2,m2]
    let mut raised_x = Move::new();
    for q in targets.points() {
        raised_x = &raised_x + &pt(q.x, m1, q.w);
    }
    let p3 = &(&kept + &raised_x) + &pt(m2, m2, at_m2m2 + at_m1m2);

    let sigma = 1.0 - p.eta1;
    let gamma = p.eta2;
    let background = pt(m2, m2, p.eta3);
    let full = (1.0 / gamma).floor();
    let mut remainder = 1.0 - full * gamma;
    if remainder <= REMAINDER_TOL * gamma {
        remainder = 0.0;
    }
    let lp = LoopTemplate {
        s: d.s.as_move().clone(),
        e: d.e.as_move().clone(),
        h: d.h.clone(),
        h_minus: h_minus.clone(),
        gamma,
        scale: sigma,
        background: background.clone(),
        full_iterations: full as u64,
        remainder,
    };
    let iterations = lp.iterations();

    let prologue = vec![
        frame(&p0, "prologue start")?,
        frame(&p1, "prologue horizontal split")?,
        frame(&p2, "prologue vertical split")?,
        frame(&p3, "prologue horizontal raise")?,
        frame(&lp.frame_a(0), "prologue vertical raise")?,
    ];

    // leftovers of e_error and the catalyst are raised to [m2,m2]
    let e_ideal_part = pt(beta, alpha, sigma * (1.0 - d.eps2));
    let leftover = &d.e_error.scale(sigma * d.eps2) + &h_minus.scale(sigma * gamma);
    let mut left_x = Move::new();
    for q in leftover.points() {
        left_x = &left_x + &pt(m2, q.y, q.w);
    }
    let e0 = lp.frame_a(iterations);
    let e1 = &(&e_ideal_part + &left_x) + &background;
    let delta = 1.0 - sigma * (1.0 - d.eps2);
    let e2 = &pt(beta, alpha, 1.0 - delta) + &pt(m2, m2, delta);
    let err = super::err_for_delta(delta, m2, alpha, beta);
    let dp = err / (m2 - beta) * (1.0 - err / (m2 - alpha));
    if !(1.0 - delta - dp >= -1e-15) {
        return Err(ConvertError::Expansion {
            step: "final merge".into(),
            detail: format!("delta + delta' = {} exceeds 1", delta + dp),
        });
    }
    let rest = (1.0 - delta - dp).max(0.0);
    let f1 = &(&pt(beta, alpha, rest) + &pt(m2, alpha, dp)) + &pt(m2, m2, delta);
    let f2 = &pt(beta, alpha + err, rest) + &pt(m2, alpha + err, delta + dp);
    let f3 = pt(beta + err, alpha + err, 1.0);
    let epilogue = vec![
        frame(&e0, "loop end")?,
        frame(&e1, "epilogue horizontal raise")?,
        frame(&e2, "epilogue vertical raise")?,
        frame(&f1, "final merge horizontal raise")?,
        frame(&f2, "final merge vertical merge")?,
        frame(&f3, "final merge horizontal merge")?,
    ];

    let mut ks: Vec<u64> = match &opts.materialize {
        Materialize::All => {
            if iterations > opts.loop_cap {
                return Err(ConvertError::LoopTooLong { iterations, cap: opts.loop_cap });
            }
            (0..iterations).collect()
        }
        Materialize::Sampled(extra) => {
            let last = iterations.saturating_sub(1);
            let mut v = vec![0, 1.min(last), last];
            v.extend(extra.iter().map(|&k| k.min(last)));
            v
        }
    };
    ks.sort_unstable();
    ks.dedup();

    let check = Check { opts };
    let mut jobs: Vec<(String, Axis, Configuration, Configuration)> = Vec::new();
    let prologue_steps = [
        ("prologue horizontal split", Axis::Horizontal),
        ("prologue vertical split", Axis::Vertical),
        ("prologue horizontal raise", Axis::Horizontal),
        ("prologue vertical raise", Axis::Vertical),
    ];
    for (i, (name, axis)) in prologue_steps.iter().enumerate() {
        jobs.push((name.to_string(), *axis, prologue[i].clone(), prologue[i + 1].clone()));
    }
    for &k in &ks {
        let a = frame(&lp.frame_a(k), "loop")?;
        let bk = frame(&lp.frame_b(k), "loop")?;
        let next = frame(&lp.frame_a(k + 1), "loop")?;
        jobs.push((format!("loop k={k} horizontal"), Axis::Horizontal, a, bk.clone()));
        jobs.push((format!("loop k={k} vertical"), Axis::Vertical, bk, next));
    }
    let epilogue_steps = [
        ("epilogue horizontal raise", Axis::Horizontal),
        ("epilogue vertical raise", Axis::Vertical),
        ("final merge horizontal raise", Axis::Horizontal),
        ("final merge vertical merge", Axis::Vertical),
        ("final merge horizontal merge", Axis::Horizontal),
    ];
    for (i, (name, axis)) in epilogue_steps.iter().enumerate() {
        jobs.push((name.to_string(), *axis, epilogue[i].clone(), epilogue[i + 1].clone()));
    }
    let transitions = par::map(opts.par_mode, &jobs, |(name, axis, g, h)| check.run(name.clone(), *axis, g, h));

    let max_support = prologue
        .iter()
        .chain(epilogue.iter())
        .map(|f| support_count(f))
        .chain(transitions.iter().map(|t| t.support))
        .max()
        .unwrap_or(0);
    let max_pair_support = transitions.iter().map(|t| t.pair_support).max().unwrap_or(0);
    let max_mass_error = prologue
        .iter()
        .chain(epilogue.iter())
        .map(|f| (f.total_weight() - 1.0).abs())
        .chain(transitions.iter().map(|t| t.mass_error))
        .fold(0.0, f64::max);

    Ok(TdpgExpansion {
        prologue_frames: prologue,
        loop_template: lp,
        epilogue_frames: epilogue,
        transitions,
        split: (a, b),
        err,
        final_point: (beta + err, alpha + err),
        support_bound: d.point_count,
        max_support,
        max_pair_support,
        max_mass_error,
        total_transitions: 4 + 2 * iterations as u128 + 5,
    })
}

/// Builds the frames and fails on the first invalid transition, naming it.
pub fn expand_tdpg(
    d: &BoundaryDecomposition,
    p: &ConversionParams,
    opts: &ExpandOptions,
) -> Result<TdpgExpansion, ConvertError> {
    let x = expand_tdpg_report(d, p, opts)?;
    if let Some(t) = x.first_failure() {
        return Err(ConvertError::Expansion {
            step: t.step.clone(),
            detail: format!(
                "line {} has profile {:.3e} at lambda {:.3e}",
                t.worst_line, t.worst_value, t.worst_lambda
            ),
        });
    }
    Ok(x)
}

/// Mass distance between the last frame and the point `(x, y)`.
pub fn distance_to_point(f: &Configuration, x: f64, y: f64) -> f64 {
    l1_norm(&(f.as_move() - &pt(x, y, 1.0)))
}

/// Exact toy game at `Λ = 1` on the grid `{1, 1.8, 2, 5}` ending at `[1.8, 1.8]`.
///
/// Every line of `h` is a merge, a split or a raise: with `a = 1/10` and
/// `q = 1/54`, column `y = 1` splits `[2]` into `[1.8]` and `[5]`, column
/// `y = 1.8` merges `[1]` and `[2]` into their mean, column `y = 2` merges
/// `[1]` and `[5]` at `1.8` with room to spare, and column `y = 5` raises.
pub fn toy_exact_game() -> (Move, Move) {
    let a = 0.1;
    let q = 1.0 / 54.0;
    let h = Move::from_triples(&[
        (1.8, 1.0, a),
        (2.0, 1.0, -(a + q)),
        (5.0, 1.0, q),
        (1.0, 1.8, -a),
        (1.8, 1.8, 0.5),
        (2.0, 1.8, -(0.5 - a)),
        (1.0, 2.0, -(0.5 - a - q)),
        (1.8, 2.0, 0.5 - a),
        (5.0, 2.0, -q),
        (1.0, 5.0, -q),
        (2.0, 5.0, q),
    ])
    .expect("finite entries");
    let v = crate::points::transpose(&h);
    (h, v)
}

/// Exact raise game: `½[Λ,Λ+1] + ½[Λ+1,Λ] → [Λ+1,Λ+1]`.
pub fn toy_raise_game(lambda: f64) -> (Move, Move) {
    let h = Move::from_points([
        PointMass::new(lambda, lambda + 1.0, -0.5),
        PointMass::new(lambda + 1.0, lambda + 1.0, 0.5),
    ])
    .expect("finite entries");
    let v = crate::points::transpose(&h);
    (h, v)
}
