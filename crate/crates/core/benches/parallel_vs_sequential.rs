use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;
use tinymarl_core::game::{
    all_followers_respond_with, solve_equilibrium_with, verify_equilibrium, GameInstance, PriceMatrix, SolverConfig,
    VerifyConfig,
};
use tinymarl_core::par::Execution;
use tinymarl_core::rng;

fn market(uavs: usize, rsus: usize) -> GameInstance {
    let mut r = rng::stream(1, "bench/market", 0, 0);
    let uav_rows: Vec<(f64, f64, Vec<f64>)> = (0..uavs)
        .map(|_| {
            let s = (0..rsus).map(|_| r.random_range(0.05..0.7)).collect();
            (r.random_range(10.0..20.0), r.random_range(2.0..6.0), s)
        })
        .collect();
    let rsu_rows: Vec<(f64, f64, f64)> =
        (0..rsus).map(|_| (r.random_range(1.0..4.0), r.random_range(5.0..35.0), r.random_range(20.0..30.0))).collect();
    GameInstance::from_log_qualities(&uav_rows, &rsu_rows).unwrap()
}

const STRATEGIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn followers(c: &mut Criterion) {
    let g = market(64, 8);
    let prices = PriceMatrix::from_fn(&g, |j, _| 0.5 * (g.rsu(j).bandwidth_cost + g.rsu(j).price_cap));
    let mut group = c.benchmark_group("follower_responses_64x8");
    for (name, exec) in STRATEGIES {
        group.bench_function(name, |b| b.iter(|| all_followers_respond_with(black_box(&g), black_box(&prices), exec)));
    }
    group.finish();
}

fn equilibrium(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_equilibrium");
    for (uavs, rsus) in [(15, 3), (15, 8), (60, 8)] {
        let g = market(uavs, rsus);
        for (name, exec) in STRATEGIES {
            let cfg = SolverConfig { execution: exec, ..SolverConfig::default() };
            group.bench_with_input(BenchmarkId::new(name, format!("{uavs}x{rsus}")), &g, |b, g| {
                b.iter(|| solve_equilibrium_with(black_box(g), &cfg).unwrap())
            });
        }
    }
    group.finish();
}

fn verification(c: &mut Criterion) {
    let g = market(15, 8);
    let sol = solve_equilibrium_with(&g, &SolverConfig::default()).unwrap();
    let mut group = c.benchmark_group("verify_equilibrium_15x8");
    group.sample_size(20);
    for (name, exec) in STRATEGIES {
        let cfg = VerifyConfig { num_probes: 200, execution: exec, ..VerifyConfig::default() };
        group.bench_function(name, |b| b.iter(|| verify_equilibrium(black_box(&g), black_box(&sol), &cfg)));
    }
    group.finish();
}

criterion_group!(benches, followers, equilibrium, verification);
criterion_main!(benches);
