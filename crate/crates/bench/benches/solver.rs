use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pdmp_fv::solver::ImplicitSolver;
use pdmp_fv::{
    compute_coefficients, estimate_density, init_density, McConfig, QuadratureSpec, SchemeParams,
    SolverMethod,
};
use pdmp_fv_bench::{coefficients, tcp_fj};

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assembly");
    for h in [0.1, 0.01, 0.002] {
        let (model, mesh) = tcp_fj(h);
        group.bench_with_input(BenchmarkId::from_parameter(h), &h, |b, &h| {
            b.iter(|| compute_coefficients(&model, &mesh, h, QuadratureSpec::default()).unwrap())
        });
    }
    group.finish();
}

fn step(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for h in [0.1, 0.01] {
        let (model, mesh, coeffs) = coefficients(h);
        let state = init_density(&model, &mesh).unwrap();
        for method in [SolverMethod::FixedPoint, SolverMethod::DirectFactorization] {
            let solver = ImplicitSolver::new(&coeffs, SchemeParams::new(h, h, method)).unwrap();
            group.bench_with_input(BenchmarkId::new(method.to_string(), h), &state, |b, s| {
                b.iter(|| solver.step(s).unwrap())
            });
        }
        group.bench_with_input(BenchmarkId::new("factorize", h), &h, |b, &h| {
            b.iter(|| {
                ImplicitSolver::new(
                    &coeffs,
                    SchemeParams::new(h, h, SolverMethod::DirectFactorization),
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(10);
    let (model, mesh) = tcp_fj(0.01);
    let config = McConfig::new(100_000, 10.0, 1, mesh);
    group.bench_function("tcp-fj 1e5 particles T=10", |b| {
        b.iter(|| estimate_density(&model, &config).unwrap())
    });
    group.finish();
}

criterion_group!(benches, assembly, step, monte_carlo);
criterion_main!(benches);
