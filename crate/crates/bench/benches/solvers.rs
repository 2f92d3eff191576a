use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mfgkit::solvers::{project_simplex, Algorithm};
use mfgkit::{exploitability, induced_mean_field, zoo, Policy};

fn beach_bar(n: usize) -> mfgkit::Environment {
    zoo::beach_bar(zoo::BeachBar { n, bar: n / 2, horizon: 10, ..Default::default() }).unwrap()
}

fn recursions(c: &mut Criterion) {
    let mut group = c.benchmark_group("recursions");
    for n in [10, 50, 200] {
        let env = beach_bar(n);
        let pi = Policy::uniform(&env);
        group.bench_with_input(BenchmarkId::new("induced_mean_field", n), &n, |b, _| {
            b.iter(|| induced_mean_field(&env, black_box(&pi)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("exploitability", n), &n, |b, _| {
            b.iter(|| exploitability(&env, black_box(&pi)).unwrap())
        });
    }
    group.finish();
}

fn solver_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("solver_step");
    let env = beach_bar(50);
    for name in Algorithm::NAMES {
        let alg = Algorithm::default_for(name).unwrap();
        group.bench_function(name, |b| {
            let mut solver = alg.start(&env).unwrap();
            let mut n = 0;
            b.iter(|| {
                solver.step(&env, n).unwrap();
                n += 1;
            })
        });
    }
    group.finish();
}

fn simplex(c: &mut Criterion) {
    let mut group = c.benchmark_group("project_simplex");
    for dim in [16, 256, 4096] {
        let v: Vec<f64> = (0..dim).map(|i| ((i * 7919) % 1000) as f64 / 250.0 - 2.0).collect();
        group.bench_with_input(BenchmarkId::from_parameter(dim), &v, |b, v| b.iter(|| project_simplex(black_box(v))));
    }
    group.finish();
}

criterion_group!(benches, recursions, solver_steps, simplex);
criterion_main!(benches);
