use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use hrode::conditions::{rho_estimate, ConditionKind, Sampler};
use hrode::integrate::{integrate_ode, Tolerances};
use hrode::resolution::derive;
use hrode::saddle::{FamilySpec, ScalarFn};
use hrode::{Algorithm, Matrix, ProblemSpec, Vector};
use nalgebra::dmatrix;

fn logcosh_problem() -> hrode::SaddleProblem {
    let f = ScalarFn { quadratic: 0.5, quartic: 0.0, logcosh: 1.0 };
    ProblemSpec::new(FamilySpec::Separable { f, g: f, b: vec![vec![1.0]], nonconvex: false }).build().unwrap()
}

fn expansions(c: &mut Criterion) {
    let mut group = c.benchmark_group("derive");
    for (alg, r) in [(Algorithm::Ppm, 2), (Algorithm::Egm, 2), (Algorithm::Gda, 1)] {
        group.bench_with_input(BenchmarkId::new(alg.label(), r), &(alg, r), |b, &(alg, r)| b.iter(|| derive(black_box(alg), r).unwrap()));
    }
    group.finish();
}

fn ppm_runs(c: &mut Criterion) {
    let bilinear = ProblemSpec::bilinear(&Matrix::identity(8, 8)).build().unwrap();
    let nonlinear = logcosh_problem();
    let z8 = Vector::from_element(16, 1.0);
    let z1 = Vector::from_vec(vec![0.7, -0.4]);
    c.bench_function("ppm affine 200 steps", |b| b.iter(|| hrode::dta::run(Algorithm::Ppm, &bilinear, &z8, 0.3, 200).unwrap()));
    c.bench_function("ppm newton 200 steps", |b| b.iter(|| hrode::dta::run(Algorithm::Ppm, &nonlinear, &z1, 0.3, 200).unwrap()));
}

fn integration(c: &mut Criterion) {
    let problem = ProblemSpec::quadratic(&dmatrix![1.0], &dmatrix![2.0], &dmatrix![1.0]).build().unwrap();
    let ode = derive(Algorithm::Ppm, 2).unwrap().ode;
    let z0 = Vector::from_vec(vec![1.0, 1.0]);
    c.bench_function("integrate ppm r2 to t=20", |b| {
        b.iter(|| integrate_ode(&ode, &problem, &z0, 0.1, 20.0, Tolerances::uniform(1e-10)).unwrap())
    });
}

fn rho(c: &mut Criterion) {
    let problem = logcosh_problem();
    let sampler = Sampler::default();
    c.bench_function("rho sampled os_strong_ppm", |b| b.iter(|| rho_estimate(&problem, ConditionKind::OsStrongPpm, 0.1, &sampler).unwrap()));
}

criterion_group!(benches, expansions, ppm_runs, integration, rho);
criterion_main!(benches);
