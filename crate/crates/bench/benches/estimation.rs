use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use pmtp_bench::{features, fit_config, main_policy, sim_data};
use pmtp_core::bridge::{fit_g, fit_h};
use pmtp_core::crossfit::{dr_crossfit, make_folds};
use pmtp_core::cv::{FixedProcedure, RiskContext};
use pmtp_core::parametric::{fit_g_param, fit_h_param, KAPPA_PRINTED};
use pmtp_core::simulation::{generate, sample_truncnorm, true_psi};
use pmtp_core::{DGPConfig, GaussianKernel, HyperGrid, OutcomeSpec, TaperedShiftPolicy, TreatmentSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bench_kernel(c: &mut Criterion) {
    let mut g = c.benchmark_group("kernel_matrix");
    for n in [250, 1000] {
        let x = features(&sim_data(n, 1));
        let k = GaussianKernel::new(1.0, 3).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| b.iter(|| k.matrix(x, x).unwrap()));
    }
    g.finish();
}

fn bench_bridges(c: &mut Criterion) {
    let policy = main_policy();
    let cfg = fit_config();
    let mut g = c.benchmark_group("bridge_fit");
    g.sample_size(10);
    for n in [200, 500] {
        let d = sim_data(n, 2);
        let s = d.target_indicator(&policy);
        g.bench_with_input(BenchmarkId::new("h", n), &d, |b, d| b.iter(|| fit_h(d, &cfg, &policy, &s).unwrap()));
        g.bench_with_input(BenchmarkId::new("g", n), &d, |b, d| b.iter(|| fit_g(d, &cfg, &policy, &s).unwrap()));
    }
    g.finish();
}

fn bench_risk(c: &mut Criterion) {
    let policy = main_policy();
    let d = sim_data(500, 3);
    let s = d.target_indicator(&policy);
    let rows: Vec<usize> = (0..d.n()).collect();
    let grid = HyperGrid::default();
    let h = fit_h(&d, &fit_config(), &policy, &s).unwrap();
    let mut g = c.benchmark_group("validation_risk");
    g.sample_size(10);
    g.bench_function("context_500", |b| b.iter(|| RiskContext::new(&d, &rows, &policy, &s, &grid).unwrap()));
    let ctx = RiskContext::new(&d, &rows, &policy, &s, &grid).unwrap();
    g.bench_function("risk_h_500", |b| b.iter(|| ctx.risk_h(&h).unwrap()));
    g.finish();
}

fn bench_crossfit(c: &mut Criterion) {
    let policy = main_policy();
    let d = sim_data(900, 4);
    let s = d.target_indicator(&policy);
    let plan = make_folds(d.n(), 3, 4, None).unwrap();
    let proc = FixedProcedure { grid: HyperGrid::single(1e-3, 1.0, 1e-3, 1.0, 1.0), use_complement: false };
    let mut g = c.benchmark_group("crossfit");
    g.sample_size(10);
    g.bench_function("fixed_900", |b| b.iter(|| dr_crossfit(&d, &policy, &s, &plan, &proc).unwrap()));
    g.finish();
}

fn bench_parametric(c: &mut Criterion) {
    let pol = TaperedShiftPolicy::new(0.4, 1.0, 0, -2.0, 2.0).unwrap();
    let d = generate(&DGPConfig::main(1.0, -1.0), 12_000, 5, None).unwrap();
    let s = d.target_indicator(&pol.into());
    let mut g = c.benchmark_group("parametric_fit");
    g.sample_size(10);
    g.bench_function("h_12000", |b| b.iter(|| fit_h_param(&d, OutcomeSpec::Correct, KAPPA_PRINTED).unwrap()));
    g.bench_function("g_12000", |b| b.iter(|| fit_g_param(&d, &pol, &s, TreatmentSpec::Correct).unwrap()));
    g.finish();
}

fn bench_simulation(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    c.bench_function("truncnorm_draw", |b| b.iter(|| sample_truncnorm(black_box(0.3), 1.0, -2.0, 2.0, &mut rng).unwrap()));
    let cfg = DGPConfig::main(2.0, -2.0);
    let policy = main_policy();
    let mut g = c.benchmark_group("simulation");
    g.sample_size(10);
    g.bench_function("generate_1500", |b| b.iter(|| generate(&cfg, 1500, 7, None).unwrap()));
    g.bench_function("truth_1e5", |b| b.iter(|| true_psi(&cfg, &policy, false, 100_000, 8).unwrap()));
    g.finish();
}

criterion_group!(kernels, bench_kernel);
criterion_group!(bridges, bench_bridges, bench_risk, bench_crossfit);
criterion_group!(parametric, bench_parametric);
criterion_group!(simulation, bench_simulation);
criterion_main!(kernels, bridges, parametric, simulation);
