use pointgame::baselines::{
    abdr_reward, compare_table, ddb_asymptotic, ddb_relative_residual, ddb_reward, sr_solve, SrCandidate,
};
use pointgame::validity::SELF_TOL;
use proptest::prelude::*;

#[test]
fn sr_bias_falls_as_penalty_grows() {
    let biases: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0, 6.0, 10.0].iter().map(|&l| sr_solve(l).unwrap().bias).collect();
    assert!(biases.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{biases:?}");
}

#[test]
fn sr_optimum_is_a_valid_chain() {
    for l in [0.0, 1.0, 6.0] {
        let r = sr_solve(l).unwrap();
        let p = r.aux["p"];
        let c = SrCandidate::new(l, p).unwrap();
        assert!(c.chain_valid(l, SELF_TOL));
        assert!((c.reward(l) - r.reward).abs() <= 1e-12);
    }
}

#[test]
fn ddb_approaches_the_series() {
    let gaps: Vec<f64> = (3..=8)
        .map(|k| {
            let l = 10f64.powi(k);
            (ddb_reward(l).unwrap() - ddb_asymptotic(l, 1).unwrap()).abs()
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn abdr_bias_is_inverse_square_root() {
    for l in [4.0, 16.0, 100.0, 1e6] {
        assert_eq!(abdr_reward(l).unwrap().bias, 1.0 / f64::sqrt(l));
    }
}

#[test]
fn compare_skips_out_of_domain_protocols() {
    let rows = compare_table(&[1.0], &[]);
    assert!(rows.iter().all(|r| r.protocol != "ABDR"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ddb_root_solves_its_equation(e in -2.0f64..8.0) {
        let l = 10f64.powf(e);
        let r = ddb_reward(l).unwrap();
        prop_assert!(r > 0.5);
        prop_assert!(ddb_relative_residual(l, r) <= 1e-9, "lambda {l}: {}", ddb_relative_residual(l, r));
    }
}
