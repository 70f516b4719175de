use criterion::{black_box, criterion_group, criterion_main, Criterion};
use elig_core::critical::{critical_value, CritValRequest};
use elig_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scores(n: usize) -> Vec<ScoredRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|_| ScoredRecord {
            gamma_star: rng.gen_range(-1.0..1.0),
            r_star: rng.gen_range(-2.0..2.0),
            x: Covariates::new(rng.gen_range(0.0..500.0), rng.gen_range(0..3)).unwrap(),
        })
        .collect()
}

fn table(n: usize, step: f64) -> MomentTable {
    let grid = enumerate_grid(&GridSpec::uniform(3, 0.0, 500.0, step).unwrap()).unwrap();
    moment_table(&scores(n), &grid, MomentOptions::default()).unwrap()
}

fn bench_moments(c: &mut Criterion) {
    let data = scores(10_000);
    let grid = enumerate_grid(&GridSpec::uniform(3, 0.0, 500.0, 100.0).unwrap()).unwrap();
    c.bench_function("moment_table n=10000 m=216", |b| {
        b.iter(|| moment_table(black_box(&data), &grid, MomentOptions::default()).unwrap())
    });
}

fn bench_critical_value(c: &mut Criterion) {
    let t = table(10_000, 100.0);
    c.bench_function("critical_value m=216 draws=10000", |b| {
        b.iter(|| {
            critical_value(&CritValRequest {
                cov_b: black_box(&t.cov_b),
                alpha: 0.05,
                n_draws: 10_000,
                seed: 7,
                sigma_floor: None,
            })
            .unwrap()
        })
    });
}

fn bench_rules(c: &mut Criterion) {
    let t = table(10_000, 50.0);
    let tradeoff = TradeoffConfig::new(1.0, 0.0).unwrap();
    let settings = CritValSettings {
        n_draws: 2000,
        seed: 7,
        sigma_floor: None,
    };
    let mut g = c.benchmark_group("rules m=1331");
    g.bench_function("sample-analog", |b| b.iter(|| sample_analog_rule(black_box(&t), 0.0).unwrap()));
    g.bench_function("tradeoff", |b| b.iter(|| tradeoff_rule(black_box(&t), &tradeoff).unwrap()));
    g.sample_size(10);
    g.bench_function("mistake-control", |b| {
        b.iter(|| mistake_control_rule(black_box(&t), 0.0, 0.05, &settings).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bench_moments, bench_critical_value, bench_rules);
criterion_main!(benches);
