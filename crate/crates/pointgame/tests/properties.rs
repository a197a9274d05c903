use nalgebra::DMatrix;
use pointgame::convert::{delta_clyst, delta_from_clyst};
use pointgame::points::{l1_norm, split_signs, transpose, Configuration, Move, PointMass};
use pointgame::profile::{profile_1d, profile_matrix};
use pointgame::search::{residual_decompose, split_in_basis};
use pointgame::validity::{check_h_valid, check_transition, check_v_valid, check_valid_1d, Axis, SweepMode};
use proptest::prelude::*;

mod common;
use common::oracle_minimum;

const CASES: u32 = 1000;
const TOL: f64 = 1e-10;

fn grid(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(1u32..4000, n).prop_map(|s| s.into_iter().map(|k| k as f64 / 40.0).collect())
}

/// Zero-sum function on at most five points of `(0, 100]`, unit L1 mass.
fn zero_sum_line() -> impl Strategy<Value = Vec<(f64, f64)>> {
    (2usize..=5)
        .prop_flat_map(|n| (grid(n), prop::collection::vec(-1.0f64..1.0, n)))
        .prop_filter_map("degenerate", |(xs, mut w)| {
            let s: f64 = w[..w.len() - 1].iter().sum();
            *w.last_mut().unwrap() = -s;
            let mass: f64 = w.iter().map(|v| v.abs()).sum();
            (mass > 1e-3).then(|| xs.into_iter().zip(w).map(|(x, v)| (x, v / mass)).collect())
        })
}

fn config(points: &[(f64, f64, f64)]) -> Configuration {
    Configuration::from_points(points.iter().map(|&(x, y, w)| PointMass::new(x, y, w))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    // (a) mass at several x coalescing at its weighted mean
    #[test]
    fn merges_are_valid(
        xs in grid(4),
        ws in prop::collection::vec(0.01f64..1.0, 4),
        y in 0.1f64..10.0,
        k in 2usize..=4,
        vertical in any::<bool>(),
    ) {
        let (xs, ws) = (&xs[..k], &ws[..k]);
        let total: f64 = ws.iter().sum();
        let mean = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / total;
        let place = |a: f64, w: f64| if vertical { (y, a, w) } else { (a, y, w) };
        let before: Vec<_> = xs.iter().zip(ws).map(|(&x, &w)| place(x, w)).collect();
        let after = vec![place(mean, total)];
        let axis = if vertical { Axis::Vertical } else { Axis::Horizontal };
        let r = check_transition(&config(&before), &config(&after), axis, TOL);
        prop_assert!(r.all_valid, "{:?}", r.worst());
    }

    // (b) g → h judged the same after scaling and after adding a common background
    #[test]
    fn validity_ignores_scale_and_background(
        f in zero_sum_line(),
        y in 0.1f64..10.0,
        c in 1e-6f64..1e3,
        bg in prop::collection::vec((0.1f64..20.0, 0.1f64..20.0, 0.0f64..5.0), 0..4),
    ) {
        let shift: f64 = f.iter().map(|p| p.1.abs()).sum::<f64>() + 1.0;
        let g: Vec<_> = f.iter().map(|&(x, w)| (x, y, shift + (-w).max(0.0))).collect();
        let h: Vec<_> = f.iter().map(|&(x, w)| (x, y, shift + w.max(0.0))).collect();
        let g = config(&g);
        let h = config(&h);
        let base = check_transition(&g, &h, Axis::Horizontal, TOL);
        let scaled = check_transition(
            &Configuration::clip(&g.scale(c)), &Configuration::clip(&h.scale(c)), Axis::Horizontal, TOL);
        let bgm = config(&bg);
        let shifted = check_transition(
            &Configuration::clip(&(g.as_move() + bgm.as_move())),
            &Configuration::clip(&(h.as_move() + bgm.as_move())),
            Axis::Horizontal, TOL);
        let w0 = base.worst().map_or(0.0, |l| l.report.worst_value);
        for other in [&scaled, &shifted] {
            let w1 = other.worst().map_or(0.0, |l| l.report.worst_value);
            prop_assert!((w0 - w1).abs() <= 1e-9, "{w0} vs {w1}");
            if w0.abs() > 1e-8 {
                prop_assert_eq!(base.all_valid, other.all_valid);
            }
        }
    }

    // (c) p + q = t and q = pᵀ for symmetric t
    #[test]
    fn residual_split_round_trips(
        s in grid(5),
        entries in prop::collection::vec(-1.0f64..1.0, 25),
        symmetric in any::<bool>(),
    ) {
        let t = [0.1, 0.3, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 10.0, 1000.0];
        let mut m = DMatrix::from_row_slice(5, 5, &entries);
        if symmetric {
            m = &m + m.transpose();
        }
        let mv = Move::from_matrix(&s, &m, pointgame::points::Orientation::RowX).unwrap();
        let d = residual_decompose(&mv, &s, &t).unwrap();
        let back = &d.p + &d.q;
        prop_assert!(l1_norm(&(&back - &mv)) <= 1e-12 * (1.0 + l1_norm(&mv)));
        if symmetric {
            prop_assert!(l1_norm(&(&transpose(&d.p) - &d.q)) <= 1e-12 * (1.0 + l1_norm(&mv)));
        }
    }

    // (d) δ → δ_clyst → δ
    #[test]
    fn delta_clyst_round_trips(
        eps1 in 0.0f64..1e-2,
        eps2 in 0.0f64..1e-2,
        c1 in 1e-3f64..0.9,
        delta in 1e-9f64..0.5,
    ) {
        let dc = delta_clyst(eps1, eps2, c1, delta);
        let back = delta_from_clyst(eps1, eps2, c1, dc);
        prop_assert!((back - delta).abs() <= 1e-12, "{delta} -> {dc} -> {back}");
    }

    // (e) dense sweep against the exact minimum over critical points
    #[test]
    fn dense_sweep_matches_oracle(f in zero_sum_line()) {
        let exact = oracle_minimum(&f);
        let dense = check_valid_1d(&f, &SweepMode::dense(), TOL);
        // skip marginally invalid instances below the sweep's resolution
        prop_assume!(!(exact < -TOL && exact > -1e-7));
        prop_assert_eq!(dense.is_valid, exact >= -TOL, "oracle min {} dense worst {}", exact, dense.worst_value);
    }

    #[test]
    fn transpose_keeps_norm_and_swaps_axes(
        pts in prop::collection::vec((1u32..8, 1u32..8, -1.0f64..1.0), 1..12),
    ) {
        let m = Move::from_points(pts.iter().map(|&(x, y, w)| PointMass::new(x as f64, y as f64, w))).unwrap();
        prop_assert!((l1_norm(&m) - l1_norm(&transpose(&m))).abs() <= 1e-15 * l1_norm(&m));
        prop_assert_eq!(transpose(&transpose(&m)), m.clone());
        let dense = SweepMode::Grid(vec![0.1, 1.0, 10.0]);
        prop_assert_eq!(check_h_valid(&m, &dense, TOL).all_valid, check_v_valid(&transpose(&m), &dense, TOL).all_valid);
    }

    #[test]
    fn split_signs_reassemble(
        pts in prop::collection::vec((1u32..8, 1u32..8, -1.0f64..1.0), 0..12),
    ) {
        let m = Move::from_points(pts.iter().map(|&(x, y, w)| PointMass::new(x as f64, y as f64, w))).unwrap();
        let (pos, neg) = split_signs(&m);
        prop_assert_eq!(&(pos.as_move() - neg.as_move()), &m);
        let c = m.canonical(1e-15);
        prop_assert_eq!(c.canonical(1e-15), c.clone());
        let with_zero = &c + &Move::point(100.0, 100.0, 0.0).unwrap();
        prop_assert_eq!(with_zero.canonical(1e-15), c);
    }

    // Σ f(x)·λx/(λ+x) = −λ²·Σ f(x)/(λ+x) when Σ f = 0
    #[test]
    fn profile_forms_agree(f in zero_sum_line(), lam in 1e-3f64..1e3) {
        let direct = profile_1d(&f, lam);
        let alt: f64 = -lam * lam * f.iter().map(|&(x, w)| w / (lam + x)).sum::<f64>();
        prop_assert!((direct - alt).abs() <= 1e-12 * (1.0 + lam * lam));
    }

    #[test]
    fn profile_matrix_is_the_kernel(s in grid(5), lam in 1e-3f64..1e3) {
        let h = profile_matrix(&s, &[lam]);
        for (j, &x) in s.iter().enumerate() {
            prop_assert!((h[(0, j)] - lam * x / (lam + x)).abs() <= 1e-14 * lam.max(x));
        }
    }

    #[test]
    fn basis_split_of_symmetric_matrix(entries in prop::collection::vec(-1.0f64..1.0, 16)) {
        let w = DMatrix::<f64>::identity(4, 4);
        let m = DMatrix::from_row_slice(4, 4, &entries);
        let t = &m + m.transpose();
        let (p, q, _) = split_in_basis(&t, &w);
        prop_assert!((&p + &q - &t).norm() <= 1e-14);
        prop_assert!((p.transpose() - q).norm() <= 1e-14);
    }
}
