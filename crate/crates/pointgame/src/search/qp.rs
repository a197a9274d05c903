//! Convex quadratic programs `min ½xᵀPx + qᵀx  s.t.  l ≤ Ax ≤ u`.
//!
//! Operator splitting (ADMM with a cached Cholesky factor and adaptive step)
//! finds the active set; an equality-constrained KKT solve on that set then
//! polishes the iterate to near machine precision.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct QpSettings {
    pub max_iterations: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Initial ADMM step.
    pub rho: f64,
    /// Proximal regularisation of the x-update.
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    /// Iterations between residual checks and step updates.
    pub check_every: usize,
    /// Residual level (scaled) below which polishing is attempted.
    pub polish_below: f64,
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            max_iterations: 100_000,
            eps_abs: 1e-12,
            eps_rel: 1e-12,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            check_every: 25,
            polish_below: 1e-3,
            polish: true,
        }
    }
}

impl QpSettings {
    pub fn validate(&self) -> Result<(), QpError> {
        let ok = self.max_iterations > 0
            && self.eps_abs > 0.0
            && self.eps_rel >= 0.0
            && self.rho > 0.0
            && self.sigma > 0.0
            && self.alpha > 0.0
            && self.alpha < 2.0
            && self.check_every > 0;
        if ok {
            Ok(())
        } else {
            Err(QpError::Settings)
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("no convergence after {iterations} iterations (primal {primal_residual:e}, dual {dual_residual:e})")]
    NotConverged {
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
        last: DVector<f64>,
    },
    #[error("quadratic term is not positive semidefinite")]
    NotConvex,
    #[error("inconsistent dimensions")]
    Shape,
    #[error("invalid solver settings")]
    Settings,
    #[error("lower bound exceeds upper bound in row {0}")]
    Bounds(usize),
}

/// Quadratic term of [`qp_solve`].
#[derive(Debug, Clone, Copy)]
pub enum QuadTerm<'a> {
    Identity,
    Provided(&'a DMatrix<f64>),
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers: negative on active lower bounds, positive on active upper bounds.
    pub y: DVector<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub polished: bool,
}

/// `min ½xᵀQx + cᵀx` subject to `Ax ≥ 0`.
pub fn qp_solve(
    quad: QuadTerm<'_>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    settings: &QpSettings,
) -> Result<QpSolution, QpError> {
    let n = c.len();
    let p = match quad {
        QuadTerm::Identity => DMatrix::identity(n, n),
        QuadTerm::Provided(p) => p.clone(),
    };
    let m = a.nrows();
    let problem = QpProblem {
        p,
        q: c.clone(),
        a: a.clone(),
        l: DVector::zeros(m),
        u: DVector::from_element(m, f64::INFINITY),
    };
    solve(&problem, settings)
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn objective(pr: &QpProblem, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(&pr.p * x)) + pr.q.dot(x)
}

fn project(v: f64, l: f64, u: f64) -> f64 {
    v.max(l).min(u)
}

struct Residuals {
    primal: f64,
    dual: f64,
    primal_tol: f64,
    dual_tol: f64,
    primal_scale: f64,
    dual_scale: f64,
}

impl Residuals {
    fn converged(&self) -> bool {
        self.primal <= self.primal_tol && self.dual <= self.dual_tol
    }
}

fn residuals(pr: &QpProblem, x: &DVector<f64>, z: &DVector<f64>, y: &DVector<f64>, s: &QpSettings) -> Residuals {
    let ax = &pr.a * x;
    let px = &pr.p * x;
    let aty = pr.a.transpose() * y;
    let primal = inf_norm(&(&ax - z));
    let dual = inf_norm(&(&px + &pr.q + &aty));
    let primal_scale = inf_norm(&ax).max(inf_norm(z));
    let dual_scale = inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&pr.q));
    // double-precision evaluation noise of Ax and Px + q + Aᵀy
    let row_sum = |m: &DMatrix<f64>| m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let noise = 64.0 * f64::EPSILON;
    let a_norm = row_sum(&pr.a);
    let primal_floor = noise * a_norm * inf_norm(x);
    let dual_floor = noise * (row_sum(&pr.p) * inf_norm(x) + row_sum(&pr.a.transpose()) * inf_norm(y) + inf_norm(&pr.q));
    Residuals {
        primal,
        dual,
        primal_tol: (s.eps_abs + s.eps_rel * primal_scale).max(primal_floor),
        dual_tol: (s.eps_abs + s.eps_rel * dual_scale).max(dual_floor),
        primal_scale,
        dual_scale,
    }
}

fn factor(pr: &QpProblem, sigma: f64, rho: &DVector<f64>) -> Result<Cholesky<f64, Dyn>, QpError> {
    let n = pr.p.nrows();
    let mut k = &pr.p + DMatrix::identity(n, n) * sigma;
    if pr.a.nrows() > 0 {
        let ra = DMatrix::from_fn(pr.a.nrows(), n, |i, j| rho[i] * pr.a[(i, j)]);
        k += pr.a.transpose() * ra;
    }
    Cholesky::new(k).ok_or(QpError::NotConvex)
}

fn rho_vector(pr: &QpProblem, rho: f64) -> DVector<f64> {
    DVector::from_fn(pr.a.nrows(), |i, _| {
        if pr.l[i] == pr.u[i] {
            1e3 * rho
        } else {
            rho
        }
    })
}

/// Ruiz equilibration: `P̄ = c·DPD`, `q̄ = c·Dq`, `Ā = EAD`, bounds scaled by `E`.
struct Scaling {
    d: DVector<f64>,
    e: DVector<f64>,
    c: f64,
}

fn equilibrate(pr: &QpProblem) -> (QpProblem, Scaling) {
    let n = pr.q.len();
    let m = pr.a.nrows();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    let mut p = pr.p.clone();
    let mut a = pr.a.clone();
    let guard = |v: f64| if v < 1e-4 { 1.0 } else { v.min(1e4) };
    for _ in 0..15 {
        let dd = DVector::from_fn(n, |j, _| {
            let cp = p.column(j).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let ca = a.column(j).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            1.0 / guard(cp.max(ca)).sqrt()
        });
        let de = DVector::from_fn(m, |i, _| {
            1.0 / guard(a.row(i).iter().fold(0.0f64, |acc, v| acc.max(v.abs()))).sqrt()
        });
        p = DMatrix::from_fn(n, n, |i, j| dd[i] * p[(i, j)] * dd[j]);
        a = DMatrix::from_fn(m, n, |i, j| de[i] * a[(i, j)] * dd[j]);
        d.component_mul_assign(&dd);
        e.component_mul_assign(&de);
    }
    let q = d.component_mul(&pr.q);
    let mean_col = if n > 0 {
        (0..n)
            .map(|j| p.column(j).iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
            .sum::<f64>()
            / n as f64
    } else {
        1.0
    };
    let c = 1.0 / guard(mean_col.max(inf_norm(&q)));
    let scaled = QpProblem {
        p: p * c,
        q: q * c,
        a,
        l: DVector::from_fn(m, |i, _| e[i] * pr.l[i]),
        u: DVector::from_fn(m, |i, _| e[i] * pr.u[i]),
    };
    (scaled, Scaling { d, e, c })
}

impl Scaling {
    fn unscale(&self, x: &DVector<f64>, z: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        (
            self.d.component_mul(x),
            z.component_div(&self.e),
            self.e.component_mul(y) / self.c,
        )
    }
}

pub fn solve(pr: &QpProblem, s: &QpSettings) -> Result<QpSolution, QpError> {
    s.validate()?;
    let n = pr.q.len();
    let m = pr.a.nrows();
    if pr.p.shape() != (n, n) || (m > 0 && pr.a.ncols() != n) || pr.l.len() != m || pr.u.len() != m {
        return Err(QpError::Shape);
    }
    if let Some(i) = (0..m).find(|&i| pr.l[i] > pr.u[i]) {
        return Err(QpError::Bounds(i));
    }
    let (sp, scaling) = equilibrate(pr);

    let mut rho = s.rho;
    let mut rho_v = rho_vector(&sp, rho);
    let mut chol = factor(&sp, s.sigma, &rho_v)?;
    let mut x = DVector::zeros(n);
    let mut z = DVector::from_fn(m, |i, _| project(0.0, sp.l[i], sp.u[i]));
    let mut y = DVector::zeros(m);
    let at = sp.a.transpose();
    let mut last = residuals(pr, &x, &z, &y, s);
    let mut last_x = DVector::zeros(n);
    let mut last_polish_at = f64::INFINITY;

    for it in 1..=s.max_iterations {
        let rhs = &x * s.sigma - &sp.q + &at * (rho_v.component_mul(&z) - &y);
        let xt = chol.solve(&rhs);
        let zt = &sp.a * &xt;
        x = &xt * s.alpha + &x * (1.0 - s.alpha);
        let zh = &zt * s.alpha + &z * (1.0 - s.alpha);
        let z_new = DVector::from_fn(m, |i, _| project(zh[i] + y[i] / rho_v[i], sp.l[i], sp.u[i]));
        y += rho_v.component_mul(&(&zh - &z_new));
        z = z_new;

        if it % s.check_every != 0 && it != s.max_iterations {
            continue;
        }
        let (ux, uz, uy) = scaling.unscale(&x, &z, &y);
        last = residuals(pr, &ux, &uz, &uy, s);
        last_x = ux.clone();
        if last.converged() {
            let mut sol = QpSolution {
                objective: objective(pr, &ux),
                x: ux,
                y: uy.clone(),
                iterations: it,
                primal_residual: last.primal,
                dual_residual: last.dual,
                polished: false,
            };
            if s.polish {
                if let Some(p) = polish(pr, &uz, &uy, s) {
                    if p.objective <= sol.objective + 1e-14 * (1.0 + sol.objective.abs()) {
                        sol = QpSolution { iterations: it, ..p };
                    }
                }
            }
            return Ok(sol);
        }
        let rel_p = last.primal / last.primal_scale.max(1e-30);
        let rel_d = last.dual / last.dual_scale.max(1e-30);
        let rel = rel_p.max(rel_d);
        if s.polish && rel < s.polish_below && rel < 0.1 * last_polish_at {
            last_polish_at = rel;
            if let Some(p) = polish(pr, &uz, &uy, s) {
                return Ok(QpSolution { iterations: it, ..p });
            }
        }
        if m > 0 {
            // step update on the scaled problem's own residuals
            let r = residuals(&sp, &x, &z, &y, s);
            let sp_rel = r.primal / r.primal_scale.max(1e-30);
            let sd_rel = r.dual / r.dual_scale.max(1e-30);
            if sp_rel > 0.0 && sd_rel > 0.0 {
                let new_rho = (rho * (sp_rel / sd_rel).sqrt()).clamp(1e-6, 1e6);
                if new_rho > 5.0 * rho || new_rho < rho / 5.0 {
                    rho = new_rho;
                    rho_v = rho_vector(&sp, rho);
                    chol = factor(&sp, s.sigma, &rho_v)?;
                }
            }
        }
    }
    Err(QpError::NotConverged {
        iterations: s.max_iterations,
        primal_residual: last.primal,
        dual_residual: last.dual,
        last: last_x,
    })
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Solves the equality-constrained QP on the working set, then adds violated
/// rows and drops rows with wrong-signed multipliers until the KKT
/// conditions hold. Returns `None` when the set does not settle.
fn polish(pr: &QpProblem, z: &DVector<f64>, y: &DVector<f64>, s: &QpSettings) -> Option<QpSolution> {
    let origin_feasible = (0..pr.l.len()).all(|i| pr.l[i] <= 0.0 && 0.0 <= pr.u[i]);
    if origin_feasible {
        if let Some(sol) = primal_active_set(pr, z, y, s) {
            return Some(sol);
        }
    }
    reoptimize(pr, z, y, s)
}

/// Primal active-set method started at the origin, with the ADMM estimate choosing the first working set.
fn primal_active_set(pr: &QpProblem, z: &DVector<f64>, y: &DVector<f64>, s: &QpSettings) -> Option<QpSolution> {
    let n = pr.q.len();
    let m = pr.a.nrows();
    let guess = initial_bounds(pr, z, y);
    let mut set = vec![Bound::Free; m];
    for i in 0..m {
        let at_origin = match guess[i] {
            Bound::Lower => pr.l[i] == 0.0,
            Bound::Upper => pr.u[i] == 0.0,
            Bound::Free => false,
        };
        if at_origin {
            set[i] = guess[i];
        }
    }
    let priority: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    let keep = independent_rows(pr, &set, &priority);
    for i in 0..m {
        if !keep.contains(&i) {
            set[i] = Bound::Free;
        }
    }
    let mut x = DVector::zeros(n);
    let mut seen = std::collections::HashSet::new();
    let mut bland = false;
    for _ in 0..(20 * (m + n) + 50) {
        let active: Vec<usize> = (0..m).filter(|&i| set[i] != Bound::Free).collect();
        let ax0 = &pr.a * &x;
        let shifted = QpProblem {
            p: pr.p.clone(),
            q: &pr.p * &x + &pr.q,
            a: pr.a.clone(),
            l: &pr.l - &ax0,
            u: &pr.u - &ax0,
        };
        let (step, ya) = kkt_solve(&shifted, &active, &set)?;
        let xnorm = 1.0 + x.amax();
        if step.amax() > 1e-11 * xnorm {
            let ap = &pr.a * &step;
            let ax = &pr.a * &x;
            let mut alpha = 1.0;
            let mut block = None;
            for i in 0..m {
                if set[i] != Bound::Free {
                    continue;
                }
                let scale = 1e-14 * pr.a.row(i).amax() * step.amax();
                let (ratio, bound) = if ap[i] < -scale && pr.l[i].is_finite() {
                    (((pr.l[i] - ax[i]) / ap[i]).max(0.0), Bound::Lower)
                } else if ap[i] > scale && pr.u[i].is_finite() {
                    (((pr.u[i] - ax[i]) / ap[i]).max(0.0), Bound::Upper)
                } else {
                    continue;
                };
                if ratio < alpha || (ratio == alpha && block.is_some_and(|(j, _)| i < j)) {
                    alpha = ratio;
                    block = Some((i, bound));
                }
            }
            x += step * alpha;
            if let Some((i, b)) = block {
                set[i] = b;
                continue;
            }
        }
        let mut ys = DVector::zeros(m);
        for (k, &i) in active.iter().enumerate() {
            ys[i] = ya[k];
        }
        if let Some((xr, yr)) = refine_on_face(pr, &x, &active, &set) {
            let axr = &pr.a * &xr;
            let feasible = (0..m).all(|i| axr[i] >= pr.l[i] - 1e-14 * (1.0 + axr[i].abs()) && axr[i] <= pr.u[i] + 1e-14 * (1.0 + axr[i].abs()));
            if feasible {
                x = xr;
                ys = yr;
            }
        }
        let y_scale = ys.amax();
        let wrong = |i: usize| match set[i] {
            _ if pr.l[i] == pr.u[i] => 0.0,
            Bound::Lower => ys[i],
            Bound::Upper => -ys[i],
            Bound::Free => 0.0,
        };
        let ax = &pr.a * &x;
        let zs = DVector::from_fn(m, |i, _| project(ax[i], pr.l[i], pr.u[i]));
        let r = residuals(pr, &x, &zs, &ys, s);
        let sign_tol = r.dual_tol.max(1e-12 * y_scale);
        let candidates: Vec<usize> = active.iter().copied().filter(|&i| wrong(i) > sign_tol).collect();
        if candidates.is_empty() {
            for &i in &active {
                if pr.l[i] != pr.u[i] {
                    ys[i] = if set[i] == Bound::Lower { ys[i].min(0.0) } else { ys[i].max(0.0) };
                }
            }
            let r = residuals(pr, &x, &zs, &ys, s);
            if !r.converged() {
                return None;
            }
            return Some(QpSolution {
                objective: objective(pr, &x),
                x,
                y: ys,
                iterations: 0,
                primal_residual: r.primal,
                dual_residual: r.dual,
                polished: true,
            });
        }
        if !seen.insert(set.clone()) {
            bland = true;
        }
        let drop = if bland {
            candidates[0]
        } else {
            *candidates.iter().max_by(|&&i, &&j| wrong(i).total_cmp(&wrong(j)))?
        };
        set[drop] = Bound::Free;
    }
    None
}

/// Exact minimizer on the face `A_W x = b_W` through a null-space basis, plus least-squares multipliers.
fn refine_on_face(pr: &QpProblem, x: &DVector<f64>, active: &[usize], set: &[Bound]) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = pr.q.len();
    let k = active.len();
    let aw = DMatrix::from_fn(k, n, |r, j| pr.a[(active[r], j)]);
    let mut x = x.clone();
    // pull x back onto the face first
    if k > 0 {
        let bw = DVector::from_fn(k, |r, _| match set[active[r]] {
            Bound::Upper => pr.u[active[r]],
            _ => pr.l[active[r]],
        });
        let gap = &bw - &aw * &x;
        let corr = aw.clone().svd(true, true).solve(&gap, 1e-13).ok()?;
        x += corr;
    }
    let z = if k == 0 {
        DMatrix::identity(n, n)
    } else {
        let full = aw.clone().resize(n.max(k), n, 0.0);
        let svd = full.svd(false, true);
        let vt = svd.v_t?;
        let top = svd.singular_values.amax().max(1e-300);
        let rank = svd.singular_values.iter().filter(|&&v| v > 1e-11 * top).count();
        if rank == n {
            return None;
        }
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let null: Vec<usize> = order[rank..].to_vec();
        DMatrix::from_fn(n, null.len(), |r, c| vt[(null[c], r)])
    };
    for _ in 0..3 {
        let g = &pr.p * &x + &pr.q;
        let h = z.transpose() * &pr.p * &z;
        let rhs = -(z.transpose() * &g);
        let u = h.svd(true, true).solve(&rhs, 1e-14 * (1.0 + pr.p.amax())).ok()?;
        x += &z * u;
    }
    let g = &pr.p * &x + &pr.q;
    let mut y = DVector::zeros(pr.a.nrows());
    if k > 0 {
        let yw = aw.transpose().svd(true, true).solve(&(-g), 1e-13).ok()?;
        for (r, &i) in active.iter().enumerate() {
            y[i] = yw[r];
        }
    }
    Some((x, y))
}

fn initial_bounds(pr: &QpProblem, z: &DVector<f64>, y: &DVector<f64>) -> Vec<Bound> {
    (0..pr.a.nrows())
        .map(|i| {
            if pr.l[i] == pr.u[i] || z[i] - pr.l[i] < -y[i] {
                Bound::Lower
            } else if pr.u[i] - z[i] < y[i] {
                Bound::Upper
            } else {
                Bound::Free
            }
        })
        .collect()
}

fn reoptimize(
    pr: &QpProblem,
    z: &DVector<f64>,
    y: &DVector<f64>,
    s: &QpSettings,
) -> Option<QpSolution> {
    let m = pr.a.nrows();
    let mut set = initial_bounds(pr, z, y);
    let mut priority: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    let mut seen = std::collections::HashSet::new();
    for _ in 0..(4 * m + 10) {
        let active = independent_rows(pr, &set, &priority);
        for i in 0..m {
            if set[i] != Bound::Free && !active.contains(&i) {
                set[i] = Bound::Free;
            }
        }
        if !seen.insert(set.clone()) {
            return None;
        }
        let (xs, ya) = kkt_solve(pr, &active, &set)?;
        let mut ys = DVector::zeros(m);
        for (k, &i) in active.iter().enumerate() {
            ys[i] = ya[k];
        }
        let ax = &pr.a * &xs;
        let mut worst_violation = (0.0, usize::MAX, Bound::Free);
        for i in 0..m {
            if set[i] != Bound::Free {
                continue;
            }
            let below = pr.l[i] - ax[i];
            let above = ax[i] - pr.u[i];
            if below > worst_violation.0 {
                worst_violation = (below, i, Bound::Lower);
            }
            if above > worst_violation.0 {
                worst_violation = (above, i, Bound::Upper);
            }
        }
        let zs = DVector::from_fn(m, |i, _| project(ax[i], pr.l[i], pr.u[i]));
        let r = residuals(pr, &xs, &zs, &ys, s);
        if worst_violation.0 > r.primal_tol {
            set[worst_violation.1] = worst_violation.2;
            priority = ys.iter().map(|v| v.abs()).collect();
            priority[worst_violation.1] = f64::INFINITY;
            continue;
        }
        let mut worst_sign = (0.0, usize::MAX);
        for &i in &active {
            if pr.l[i] == pr.u[i] {
                continue;
            }
            let wrong = match set[i] {
                Bound::Lower => ys[i],
                Bound::Upper => -ys[i],
                Bound::Free => 0.0,
            };
            if wrong > worst_sign.0 {
                worst_sign = (wrong, i);
            }
        }
        let y_scale = ys.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if worst_sign.0 > r.dual_tol.max(1e-9 * y_scale) {
            // dependent active rows leave the multipliers non-unique
            if let Some(refit) = signed_multipliers(pr, &xs, &active, &set) {
                if residuals(pr, &xs, &zs, &refit, s).converged() {
                    ys = refit;
                    return Some(QpSolution {
                        objective: objective(pr, &xs),
                        primal_residual: r.primal,
                        dual_residual: residuals(pr, &xs, &zs, &ys, s).dual,
                        x: xs,
                        y: ys,
                        iterations: 0,
                        polished: true,
                    });
                }
            }
            set[worst_sign.1] = Bound::Free;
            priority = ys.iter().map(|v| v.abs()).collect();
            continue;
        }
        // clean multipliers of the wrong sign below tolerance
        for &i in &active {
            if pr.l[i] != pr.u[i] {
                ys[i] = match set[i] {
                    Bound::Lower => ys[i].min(0.0),
                    Bound::Upper => ys[i].max(0.0),
                    Bound::Free => 0.0,
                };
            }
        }
        let r = residuals(pr, &xs, &zs, &ys, s);
        if !r.converged() {
            return None;
        }
        return Some(QpSolution {
            objective: objective(pr, &xs),
            x: xs,
            y: ys,
            iterations: 0,
            primal_residual: r.primal,
            dual_residual: r.dual,
            polished: true,
        });
    }
    None
}

/// Greedy maximal independent subset of the bound rows, highest priority first.
fn independent_rows(pr: &QpProblem, set: &[Bound], priority: &[f64]) -> Vec<usize> {
    let n = pr.q.len();
    let mut order: Vec<usize> = (0..set.len()).filter(|&i| set[i] != Bound::Free).collect();
    order.sort_by(|&i, &j| {
        let eq = |k: usize| pr.l[k] == pr.u[k];
        eq(j).cmp(&eq(i)).then(priority[j].total_cmp(&priority[i])).then(i.cmp(&j))
    });
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut chosen = Vec::new();
    for i in order {
        if basis.len() == n {
            break;
        }
        let row = pr.a.row(i).transpose();
        let norm = row.norm();
        if norm == 0.0 {
            continue;
        }
        let mut r = row / norm;
        for _ in 0..2 {
            for b in &basis {
                let c = r.dot(b);
                r -= b * c;
            }
        }
        let rn = r.norm();
        if rn > 1e-9 {
            basis.push(r / rn);
            chosen.push(i);
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Multipliers of the right sign minimizing the stationarity residual on `active`.
fn signed_multipliers(pr: &QpProblem, x: &DVector<f64>, active: &[usize], set: &[Bound]) -> Option<DVector<f64>> {
    let n = pr.q.len();
    let g = -(&pr.p * x + &pr.q);
    let mut cols: Vec<(usize, f64)> = Vec::new();
    for &i in active {
        if pr.l[i] == pr.u[i] {
            cols.push((i, 1.0));
            cols.push((i, -1.0));
        } else if set[i] == Bound::Upper {
            cols.push((i, 1.0));
        } else {
            cols.push((i, -1.0));
        }
    }
    let mat = DMatrix::from_fn(n, cols.len(), |r, c| cols[c].1 * pr.a[(cols[c].0, r)]);
    let w = nnls(&mat, &g)?;
    let mut y = DVector::zeros(pr.a.nrows());
    for (c, &(i, sign)) in cols.iter().enumerate() {
        y[i] += sign * w[c];
    }
    Some(y)
}

/// Lawson-Hanson non-negative least squares.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let k = a.ncols();
    let mut w = DVector::zeros(k);
    let mut passive = vec![false; k];
    let tol = 1e-13 * a.iter().fold(1.0f64, |m, v| m.max(v.abs())) * b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let solve_passive = |passive: &[bool]| -> Option<DVector<f64>> {
        let idx: Vec<usize> = (0..k).filter(|&j| passive[j]).collect();
        let sub = DMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])]);
        let z = sub.svd(true, true).solve(b, 1e-14).ok()?;
        let mut full = DVector::zeros(k);
        for (c, &j) in idx.iter().enumerate() {
            full[j] = z[c];
        }
        Some(full)
    };
    for _ in 0..(3 * k + 10) {
        let grad = a.transpose() * (b - a * &w);
        let pick = (0..k).filter(|&j| !passive[j] && grad[j] > tol).max_by(|&i, &j| grad[i].total_cmp(&grad[j]));
        let Some(j) = pick else { return Some(w) };
        passive[j] = true;
        loop {
            let z = solve_passive(&passive)?;
            if (0..k).all(|j| !passive[j] || z[j] > 0.0) {
                w = z;
                break;
            }
            let mut step = 1.0f64;
            for j in 0..k {
                if passive[j] && z[j] <= 0.0 {
                    step = step.min(w[j] / (w[j] - z[j]));
                }
            }
            w = &w + (&z - &w) * step;
            for j in 0..k {
                if passive[j] && w[j] <= tol {
                    passive[j] = false;
                    w[j] = 0.0;
                }
            }
        }
    }
    Some(w)
}

fn kkt_solve(pr: &QpProblem, active: &[usize], set: &[Bound]) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = pr.q.len();
    let k = active.len();
    let dim = n + k;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&pr.p);
    let mut rhs = DVector::zeros(dim);
    for j in 0..n {
        rhs[j] = -pr.q[j];
    }
    for (r, &i) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = pr.a[(i, j)];
            kkt[(j, n + r)] = pr.a[(i, j)];
        }
        rhs[n + r] = match set[i] {
            Bound::Upper => pr.u[i],
            _ => pr.l[i],
        };
    }
    let scale = pr.p.iter().chain(pr.a.iter()).fold(1.0f64, |a, v| a.max(v.abs()));
    let delta = 1e-11 * scale;
    let mut reg = kkt.clone();
    for j in 0..n {
        reg[(j, j)] += delta;
    }
    for r in 0..k {
        reg[(n + r, n + r)] -= delta;
    }
    let lu = reg.lu();
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..8 {
        let res = &rhs - &kkt * &sol;
        if res.iter().all(|v| v.is_finite()) && inf_norm(&res) == 0.0 {
            break;
        }
        sol += lu.solve(&res)?;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((sol.rows(0, n).into_owned(), sol.rows(n, k).into_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unconstrained_identity() {
        let v = DVector::from_vec(vec![0.3, -1.2, 2.5]);
        let a = DMatrix::zeros(0, 3);
        let sol = qp_solve(QuadTerm::Identity, &(-&v), &a, &QpSettings::default()).unwrap();
        assert_abs_diff_eq!((sol.x - v).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_linear_term() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let sol = qp_solve(QuadTerm::Identity, &DVector::zeros(2), &a, &QpSettings::default()).unwrap();
        assert_abs_diff_eq!(sol.x.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn active_bound() {
        // min ½(x-1)² s.t. -x ≥ 0
        let a = DMatrix::from_row_slice(1, 1, &[-1.0]);
        let c = DVector::from_vec(vec![-1.0]);
        let sol = qp_solve(QuadTerm::Identity, &c, &a, &QpSettings::default()).unwrap();
        assert_abs_diff_eq!(sol.x[0], 0.0, epsilon = 1e-12);
        assert!(sol.y[0] < 0.0);
    }

    #[test]
    fn equality_and_box() {
        // project (2, 0) onto {x0 + x1 = 1, 0 ≤ x ≤ 0.8}
        let pr = QpProblem {
            p: DMatrix::identity(2, 2),
            q: DVector::from_vec(vec![-2.0, 0.0]),
            a: DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 0.0, 0.0, 1.0]),
            l: DVector::from_vec(vec![1.0, 0.0, 0.0]),
            u: DVector::from_vec(vec![1.0, 0.8, 0.8]),
        };
        let sol = solve(&pr, &QpSettings::default()).unwrap();
        assert_abs_diff_eq!(sol.x[0], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.x[1], 0.2, epsilon = 1e-12);
    }

    #[test]
    fn provided_quadratic() {
        let p = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let c = DVector::from_vec(vec![1.0, 1.0]);
        let a = DMatrix::identity(2, 2);
        let sol = qp_solve(QuadTerm::Provided(&p), &c, &a, &QpSettings::default()).unwrap();
        assert_abs_diff_eq!(sol.x.norm(), 0.0, epsilon = 1e-12);
        let sol = qp_solve(QuadTerm::Provided(&p), &(-&c), &a, &QpSettings::default()).unwrap();
        let expect = p.clone().lu().solve(&c).unwrap();
        assert_abs_diff_eq!((sol.x - expect).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn failure_carries_iterate() {
        let s = QpSettings { max_iterations: 3, polish: false, check_every: 1, ..Default::default() };
        let a = DMatrix::from_row_slice(1, 1, &[-1.0]);
        let err = qp_solve(QuadTerm::Identity, &DVector::from_vec(vec![-1.0]), &a, &s).unwrap_err();
        match err {
            QpError::NotConverged { last, iterations, .. } => {
                assert_eq!(iterations, 3);
                assert_eq!(last.len(), 1);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bad_settings() {
        let s = QpSettings { alpha: 2.5, ..Default::default() };
        let a = DMatrix::zeros(0, 1);
        assert_eq!(
            qp_solve(QuadTerm::Identity, &DVector::zeros(1), &a, &s).unwrap_err(),
            QpError::Settings
        );
    }
}
