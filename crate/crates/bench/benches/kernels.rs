use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use ebt_core::energy::{energy, energy_gradient_u, EnergyParams};
use ebt_core::grid::{poisson_solve, BoundaryCondition};
use ebt_core::measures::AtomicMeasure;
use ebt_core::profile::solve_profile;
use ebt_core::w1::w1_distance;
use ebt_core::{GridSpec, ScalarField2D, VectorField2D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn swirl(n: usize) -> VectorField2D {
    let g = GridSpec::from_bounds(n, n, [0.0, 0.0], [1.0, 1.0]).unwrap();
    VectorField2D::from_fn(g, |p| {
        let (x, y) = (p[0] - 0.5, p[1] - 0.5);
        let w = (-(x * x + y * y) / 0.02).exp();
        [-y * w, x * w]
    })
}

fn energy_kernels(c: &mut Criterion) {
    let p = EnergyParams::new(0.8, 0.01, 1e-3).unwrap();
    let mut group = c.benchmark_group("energy");
    for n in [128, 256] {
        let u = swirl(n);
        group.bench_with_input(BenchmarkId::new("value", n), &u, |b, u| {
            b.iter(|| energy(black_box(u), &p).total)
        });
        group.bench_with_input(BenchmarkId::new("gradient", n), &u, |b, u| {
            b.iter(|| energy_gradient_u(black_box(u), &p).unwrap().0)
        });
    }
    group.finish();
}

fn poisson(c: &mut Criterion) {
    let mut group = c.benchmark_group("poisson");
    for n in [128, 256] {
        let g = GridSpec::from_bounds(n, n, [0.0, 0.0], [1.0, 1.0]).unwrap();
        let f = ScalarField2D::from_fn(g, |p| {
            (2.0 * std::f64::consts::PI * p[0]).cos() * (std::f64::consts::PI * p[1]).cos()
        });
        group.bench_with_input(BenchmarkId::new("neumann", n), &f, |b, f| {
            b.iter(|| {
                poisson_solve(black_box(f), BoundaryCondition::NeumannZeroFlux, 1e-10).unwrap()
            })
        });
    }
    group.finish();
}

fn random_measure(rng: &mut ChaCha8Rng, n: usize) -> AtomicMeasure {
    let mut atoms: Vec<([f64; 2], f64)> = (0..n)
        .map(|_| ([rng.gen(), rng.gen()], rng.gen_range(0.1..1.0)))
        .collect();
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    atoms.iter_mut().for_each(|a| a.1 /= total);
    AtomicMeasure::new(atoms).unwrap()
}

fn transport(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut group = c.benchmark_group("w1");
    for n in [10, 50] {
        let mu = random_measure(&mut rng, n);
        let nu = random_measure(&mut rng, n);
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| w1_distance(black_box(&mu), black_box(&nu)).unwrap())
        });
    }
    group.finish();
}

fn profile(c: &mut Criterion) {
    c.bench_function("profile/solve", |b| {
        b.iter(|| solve_profile(black_box(0.8), 1.0, 0.01, 256).unwrap())
    });
}

criterion_group!(benches, energy_kernels, poisson, transport, profile);
criterion_main!(benches);
