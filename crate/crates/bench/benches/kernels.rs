use ali_lab_bench::{architecture, init, mixture, random_matrix, sampler, train_config};
use ali_lab_core::ali::{AliModel, AliTrainer};
use ali_lab_core::baselines::{GanModel, GanTrainer, VaeModel, VaeTrainer};
use ali_lab_core::eval::{mode_coverage, oracle_report, OracleConfig};
use ali_lab_core::nn::rng;
use ali_lab_core::train::standard_prior;
use ali_lab_core::Tape;
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

fn matmul(c: &mut Criterion) {
    let a = random_matrix(100, 64, 1);
    let b = random_matrix(64, 64, 2);
    c.bench_function("matmul_forward_backward_100x64x64", |bench| {
        bench.iter(|| {
            let mut t = Tape::new();
            let x = t.leaf(a.clone());
            let w = t.leaf(b.clone());
            let y = t.matmul(x, w).unwrap();
            let s = t.sum(y);
            black_box(t.backward(s).unwrap());
        })
    });
}

fn train_steps(c: &mut Criterion) {
    let arch = architecture(64);
    let m = train_config().batch_size;
    let mut g = c.benchmark_group("train_step_h64_m100");
    g.bench_function("ali", |bench| {
        let model = AliModel::new(&arch, init(), &mut rng::seeded(1)).unwrap();
        let mut t = AliTrainer::new(model, train_config(), standard_prior(), 1).unwrap();
        let mut data = sampler(10_000);
        bench.iter(|| black_box(t.train_step(&mut data, m).unwrap()))
    });
    g.bench_function("gan", |bench| {
        let model = GanModel::new(&arch, init(), &mut rng::seeded(1)).unwrap();
        let mut t = GanTrainer::new(model, train_config(), standard_prior(), 1).unwrap();
        let mut data = sampler(10_000);
        bench.iter(|| black_box(t.train_step(&mut data, m).unwrap()))
    });
    g.bench_function("vae", |bench| {
        let model = VaeModel::new(&arch, init(), &mut rng::seeded(1)).unwrap();
        let mut t = VaeTrainer::new(model, train_config(), 1).unwrap();
        let mut data = sampler(10_000);
        bench.iter(|| black_box(t.train_step(&mut data, m).unwrap()))
    });
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let mix = mixture();
    c.bench_function("mode_coverage_10k", |bench| {
        bench.iter_batched(
            || mix.sample(10_000, &mut rng::seeded(3)).unwrap().0,
            |x| black_box(mode_coverage(&mix, &x).unwrap()),
            BatchSize::LargeInput,
        )
    });
    let cfg = OracleConfig {
        joints: 10,
        ..OracleConfig::default()
    };
    c.bench_function("oracle_10_joints", |bench| bench.iter(|| black_box(oracle_report(cfg).unwrap())));
}

criterion_group!(benches, matmul, train_steps, evaluation);
criterion_main!(benches);
