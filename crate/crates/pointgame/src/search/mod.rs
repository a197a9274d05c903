//! Numerical search for penalised time-independent point games.
//!
//! 1. Truncated SVD of `H∘D` fixes a subspace for the lines of `h`.
//! 2. `h` is fitted so that the profile of `h + hᵀ` matches `e − s` on `T×T`
//!    while every line stays `T`-valid.
//! 3. The residual is split into `p + pᵀ` in the right singular basis of `H`,
//!    giving `h' + v' = e − s` exactly.
//! 4. `v'` is projected line by line onto the `T`-valid cone; `h* = v*ᵀ`.

pub mod qp;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::par::{self, Mode};
use crate::points::{l1_norm, support_union, transpose, Boundary, CoreError, Move, Orientation};
use crate::profile::{profile_basis, profile_matrix, svd_primed, GridSpec, ProfileError, SvdPrimed};
use crate::validity::{check_h_valid, check_v_valid, SweepMode, SELF_TOL};
pub use qp::{qp_solve, QpError, QpProblem, QpSettings, QpSolution, QuadTerm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    ProfileMatch,
    Decompose,
    Project,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::ProfileMatch => "profile matching",
            Stage::Decompose => "residual decomposition",
            Stage::Project => "projection",
        })
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{stage}: {source}")]
    Qp { stage: Stage, source: QpError },
    #[error("{stage}: {detail}")]
    Numerical { stage: Stage, detail: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub grid: GridSpec,
    pub boundary: Boundary,
    pub qp: QpSettings,
    pub weight_bound: Option<f64>,
}

impl SearchConfig {
    /// Boundary at `Λ` with final point `Λ+½+ε`, snapped onto the grid.
    pub fn new(
        grid: GridSpec,
        epsilon: f64,
        qp: QpSettings,
        weight_bound: Option<f64>,
    ) -> Result<SearchConfig, SearchError> {
        let boundary = Boundary::on_grid(grid.lambda, epsilon, &grid.s)
            .map_err(|e| SearchError::Config(format!("boundary not on grid: {e}")))?;
        if let Some(m) = weight_bound {
            if !(m > 0.0) {
                return Err(SearchError::Config(format!("weight bound must be positive, got {m}")));
            }
        }
        qp.validate().map_err(|e| SearchError::Config(e.to_string()))?;
        Ok(SearchConfig { grid, boundary, qp, weight_bound })
    }

    /// `end − start` as a matrix indexed `[x][y]`.
    pub fn target(&self) -> DMatrix<f64> {
        self.boundary
            .difference()
            .to_matrix(&self.grid.s)
            .expect("boundary lies on the grid")
    }
}

/// Outcome of the validity checks on a finished game.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidityStatus {
    /// Valid on the dense sweep.
    Valid,
    /// Valid on `T` but not on the dense sweep.
    TValidOnly,
    Invalid,
}

#[derive(Debug, Clone)]
pub struct PenTipg {
    pub h_star: Move,
    pub v_star: Move,
    pub lambda: f64,
    pub eps_approx: f64,
    /// `(β, α)`.
    pub final_point: (f64, f64),
    pub norm: f64,
    pub point_count: usize,
    pub validity: ValidityStatus,
    pub step2_objective: Option<f64>,
    pub provenance: Option<SearchConfig>,
}

impl PenTipg {
    /// Packages a pair of moves against a symmetric boundary.
    pub fn from_moves(
        h_star: Move,
        v_star: Move,
        boundary: &Boundary,
        t: &[f64],
    ) -> PenTipg {
        let eps_approx = l1_norm(&(&(&h_star + &v_star) - &boundary.difference()));
        let norm = l1_norm(&h_star).max(l1_norm(&v_star));
        let point_count = support_union(&[&h_star, &v_star]);
        let validity = assess(&h_star, &v_star, t);
        PenTipg {
            lambda: boundary.lambda,
            final_point: boundary.final_point(),
            h_star,
            v_star,
            eps_approx,
            norm,
            point_count,
            validity,
            step2_objective: None,
            provenance: None,
        }
    }

    /// Game against the boundary `½[Λ,Λ+1] + ½[Λ+1,Λ] → [β,α]`.
    pub fn with_final_point(h_star: Move, v_star: Move, lambda: f64, final_point: (f64, f64), t: &[f64]) -> PenTipg {
        let (b, a) = final_point;
        let mut bd = Boundary::symmetric(lambda, a - lambda - 0.5).expect("valid penalty");
        bd.end = crate::points::Configuration::from_points([crate::points::PointMass::new(b, a, 1.0)])
            .expect("positive weight");
        PenTipg::from_moves(h_star, v_star, &bd, t)
    }

    pub fn boundary(&self) -> Boundary {
        let (b, a) = self.final_point;
        let mut bd = Boundary::symmetric(self.lambda, a - self.lambda - 0.5).expect("valid penalty");
        bd.end = crate::points::Configuration::from_points([crate::points::PointMass::new(b, a, 1.0)])
            .expect("positive weight");
        bd
    }
}

fn assess(h: &Move, v: &Move, t: &[f64]) -> ValidityStatus {
    let dense = SweepMode::dense();
    if check_h_valid(h, &dense, SELF_TOL).all_valid && check_v_valid(v, &dense, SELF_TOL).all_valid {
        return ValidityStatus::Valid;
    }
    let grid = SweepMode::Grid(t.to_vec());
    if check_h_valid(h, &grid, SELF_TOL).all_valid && check_v_valid(v, &grid, SELF_TOL).all_valid {
        ValidityStatus::TValidOnly
    } else {
        ValidityStatus::Invalid
    }
}

/// Step-2 result.
#[derive(Debug, Clone)]
pub struct ProfileMatch {
    pub h: Move,
    /// `‖(ĥ+v̂) − (ê−ŝ)‖` on `T×T`.
    pub objective: f64,
    pub svd: SvdPrimed,
    /// Coefficients `C` (`k x |S|`); column `y` holds the line `h(·, y)` in the retained basis.
    pub coefficients: DMatrix<f64>,
}

/// `‖H (m + mᵀ − E) Hᵀ‖_F` on the parameter set `t`, for `m`, `E` indexed `[x][y]`.
pub fn profile_residual(s: &[f64], t: &[f64], m: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    let hm = profile_matrix(s, t);
    (&hm * (m + m.transpose() - target) * hm.transpose()).norm()
}

pub fn profile_match(cfg: &SearchConfig) -> Result<ProfileMatch, SearchError> {
    let s = &cfg.grid.s;
    let t = &cfg.grid.t;
    let n = s.len();
    let nt = t.len();
    let svd = svd_primed(s, t, cfg.grid.rule())?;
    let k = svd.rank;
    let target = cfg.target();
    if k == 0 {
        let zero = DMatrix::zeros(n, n);
        return Ok(ProfileMatch {
            h: Move::new(),
            objective: profile_residual(s, t, &zero, &target),
            svd,
            coefficients: DMatrix::zeros(0, n),
        });
    }
    let hm = profile_matrix(s, t);
    let b = &svd.basis;
    let g = &hm * b;
    let e_hat = &hm * &target * hm.transpose();

    // x = vec(C), index a + k*y
    let nv = k * n;
    let mut l = DMatrix::zeros(nt * nt, nv);
    for beta in 0..nt {
        for alpha in 0..nt {
            let row = alpha + nt * beta;
            for y in 0..n {
                for a in 0..k {
                    l[(row, a + k * y)] = g[(alpha, a)] * hm[(beta, y)] + g[(beta, a)] * hm[(alpha, y)];
                }
            }
        }
    }
    let rhs = DVector::from_iterator(nt * nt, (0..nt * nt).map(|r| e_hat[(r % nt, r / nt)]));
    let p = l.transpose() * &l;
    let q = -(l.transpose() * &rhs);

    let n_valid = nt * n;
    let n_box = if cfg.weight_bound.is_some() { n * n } else { 0 };
    let mut a = DMatrix::zeros(n_valid + n_box, nv);
    let mut lo = DVector::zeros(n_valid + n_box);
    let mut up = DVector::from_element(n_valid + n_box, f64::INFINITY);
    for y in 0..n {
        for alpha in 0..nt {
            for c in 0..k {
                a[(alpha + nt * y, c + k * y)] = g[(alpha, c)];
            }
        }
    }
    if let Some(m) = cfg.weight_bound {
        for y in 0..n {
            for x in 0..n {
                let row = n_valid + x + n * y;
                for c in 0..k {
                    a[(row, c + k * y)] = b[(x, c)];
                }
                lo[row] = -m;
                up[row] = m;
            }
        }
    }
    let problem = QpProblem { p, q, a, l: lo, u: up };
    let sol = qp::solve(&problem, &cfg.qp).map_err(|source| SearchError::Qp {
        stage: Stage::ProfileMatch,
        source,
    })?;
    let coefficients = DMatrix::from_fn(k, n, |a, y| sol.x[a + k * y]);
    let r = b * &coefficients;
    let h = Move::from_matrix(s, &r, Orientation::RowX)?;
    Ok(ProfileMatch {
        objective: profile_residual(s, t, &r, &target),
        h,
        svd,
        coefficients,
    })
}

/// Step-3 result: `t = p + q` with `p` built from the lower triangle of the
/// coefficient matrix in the singular basis of `H`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub p: Move,
    pub q: Move,
    /// `Wᵀ t W`.
    pub coefficients: DMatrix<f64>,
    /// Orthonormal basis (columns), descending singular values of `H`.
    pub basis: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

/// Splits a residual `t` (on the grid) into `p + q`; `q = pᵀ` when `t` is symmetric.
pub fn residual_decompose(t_move: &Move, s: &[f64], t: &[f64]) -> Result<Decomposition, SearchError> {
    let tm = t_move.to_matrix(s)?;
    let (singular_values, w) = profile_basis(s, t);
    let (p, q, coefficients) = split_in_basis(&tm, &w);
    Ok(Decomposition {
        p: Move::from_matrix(s, &p, Orientation::RowX)?,
        q: Move::from_matrix(s, &q, Orientation::RowX)?,
        coefficients,
        basis: w,
        singular_values,
    })
}

/// Matrix form of the split: returns `(p, q, Wᵀ t W)`.
pub fn split_in_basis(t: &DMatrix<f64>, w: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let tc = w.transpose() * t * w;
    let n = tc.nrows();
    let lower = DMatrix::from_fn(n, n, |j, k| {
        if j > k {
            tc[(j, k)]
        } else if j == k {
            0.5 * tc[(j, k)]
        } else {
            0.0
        }
    });
    let upper = &tc - &lower;
    let p = w * lower * w.transpose();
    let q = w * upper * w.transpose();
    (p, q, tc)
}

/// Nearest move whose columns (fixed `x`) sum to zero and have nonnegative profile on `T`.
pub fn project_valid(v_prime: &Move, grid: &GridSpec, settings: &QpSettings) -> Result<Move, SearchError> {
    project_valid_with(v_prime, grid, settings, Mode::Parallel)
}

pub fn project_valid_with(
    v_prime: &Move,
    grid: &GridSpec,
    settings: &QpSettings,
    mode: Mode,
) -> Result<Move, SearchError> {
    let s = &grid.s;
    let n = s.len();
    let vm = v_prime.to_matrix(s)?;
    let hm = profile_matrix(s, &grid.t);
    let nt = grid.t.len();
    let mut a = DMatrix::zeros(nt + 1, n);
    a.view_mut((0, 0), (nt, n)).copy_from(&hm);
    a.row_mut(nt).fill(1.0);
    let lo = DVector::zeros(nt + 1);
    let mut up = DVector::from_element(nt + 1, f64::INFINITY);
    up[nt] = 0.0;
    let lines = par::map_range(mode, n, |i| {
        let target = vm.row(i).transpose();
        let problem = QpProblem {
            p: DMatrix::identity(n, n),
            q: -target,
            a: a.clone(),
            l: lo.clone(),
            u: up.clone(),
        };
        qp::solve(&problem, settings).map(|sol| sol.x)
    });
    let mut out = DMatrix::zeros(n, n);
    for (i, line) in lines.into_iter().enumerate() {
        let x = line.map_err(|source| SearchError::Qp { stage: Stage::Project, source })?;
        out.row_mut(i).copy_from(&x.transpose());
    }
    Ok(Move::from_matrix(s, &out, Orientation::RowX)?)
}

/// Diagnostics of a search run.
#[derive(Debug, Clone)]
pub struct SearchTrace {
    pub rank: usize,
    pub step2_objective: f64,
    /// `‖h' + v' − (e − s)‖₁` after step 3.
    pub step3_residual: f64,
    pub h_prime: Move,
    pub v_prime: Move,
}

pub fn run_search(cfg: &SearchConfig) -> Result<PenTipg, SearchError> {
    run_search_traced(cfg).map(|(g, _)| g)
}

pub fn run_search_traced(cfg: &SearchConfig) -> Result<(PenTipg, SearchTrace), SearchError> {
    let s = &cfg.grid.s;
    let target = cfg.boundary.difference();
    let matched = profile_match(cfg)?;
    let h = matched.h.clone();
    let v = transpose(&h);
    let residual = &target - &(&h + &v);
    let dec = residual_decompose(&residual, s, &cfg.grid.t)?;
    let h_prime = &h + &dec.p;
    let v_prime = &v + &dec.q;
    let step3_residual = l1_norm(&(&(&h_prime + &v_prime) - &target));
    if !(step3_residual <= 1e-9 * (1.0 + l1_norm(&h_prime))) {
        return Err(SearchError::Numerical {
            stage: Stage::Decompose,
            detail: format!("h' + v' misses e - s by {step3_residual:e}"),
        });
    }
    let v_star = project_valid(&v_prime, &cfg.grid, &cfg.qp)?;
    let h_star = transpose(&v_star);
    let mut game = PenTipg::from_moves(h_star, v_star, &cfg.boundary, &cfg.grid.t);
    game.step2_objective = Some(matched.objective);
    game.provenance = Some(cfg.clone());
    let trace = SearchTrace {
        rank: matched.svd.rank,
        step2_objective: matched.objective,
        step3_residual,
        h_prime,
        v_prime,
    };
    Ok((game, trace))
}
