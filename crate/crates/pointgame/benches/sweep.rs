use std::path::Path;

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use pointgame::cli::files::load_game;
use pointgame::convert::{decompose_boundary, default_c1, delta_min, tradeoff_curve, M1Rule};
use pointgame::par::Mode;
use pointgame::validity::{check_lines, SweepMode, SELF_TOL};

const MODES: [(&str, Mode); 2] = [("sequential", Mode::Sequential), ("parallel", Mode::Parallel)];

fn golden(name: &str) -> pointgame::search::PenTipg {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/golden").join(format!("{name}.json"));
    load_game(&path).unwrap().game().unwrap()
}

fn dense_sweep(c: &mut Criterion) {
    let g = golden("pentipg2");
    let lines = g.h_star.rows();
    let sweep = SweepMode::dense();
    let mut group = c.benchmark_group("dense_sweep");
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| check_lines(black_box(&lines), &sweep, SELF_TOL, mode))
        });
    }
    group.finish();
}

fn tradeoff(c: &mut Criterion) {
    let d = decompose_boundary(&golden("pentipg1")).unwrap();
    let rule = M1Rule::Targets;
    let c1 = default_c1(d.m1(rule).unwrap(), d.lambda).unwrap();
    let dmin = delta_min(d.eps1, d.eps2, c1);
    let deltas: Vec<f64> = (0..2000).map(|i| dmin + 10f64.powf(-3.0 - 7.0 * i as f64 / 1999.0)).collect();
    let mut group = c.benchmark_group("tradeoff_curve");
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| tradeoff_curve(&d, c1, rule, black_box(&deltas), mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, dense_sweep, tradeoff);
criterion_main!(benches);
