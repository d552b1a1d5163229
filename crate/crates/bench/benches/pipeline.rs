use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sbm_deepwalk::experiments::{default_walks, sample_graph};
use sbm_deepwalk::trainer::init_state;
use sbm_deepwalk::{
    build_cooccurrence, build_linear_update, gd_step, limiting_cooccurrence, run_deepwalk,
    CoocScaling, InitMode, SbmParams, Stopping, TrainConfig, WalkConfig,
};

fn params(n: usize) -> SbmParams {
    SbmParams::new(n, 3, 0.4, 0.1).unwrap()
}

fn walks(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_cooccurrence");
    group.sample_size(10);
    for n in [300, 600] {
        let graph = sample_graph(&params(n), 1).unwrap();
        let cfg = WalkConfig::new(default_walks(n), 10, 5).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| build_cooccurrence(&graph, &cfg, 2).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("limiting_cooccurrence");
    group.sample_size(10);
    for n in [150, 300] {
        let graph = sample_graph(&params(n), 1).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| limiting_cooccurrence(&graph, 10, 5).unwrap())
        });
    }
    group.finish();
}

fn training(c: &mut Criterion) {
    let n = 600;
    let graph = sample_graph(&params(n), 1).unwrap();
    let cfg = WalkConfig::new(default_walks(n), 10, 5).unwrap();
    let cooc = build_cooccurrence(&graph, &cfg, 2)
        .unwrap()
        .rescaled(CoocScaling::RowMean(2.0));

    let mut group = c.benchmark_group("gd_step");
    for d in [1, 3] {
        let state = init_state(
            n,
            &TrainConfig {
                dim: d,
                ..TrainConfig::new(0.01)
            },
        )
        .unwrap();
        group.bench_with_input(BenchmarkId::new("n600", d), &d, |b, _| {
            b.iter(|| gd_step(&state, &cooc.values, 0.01).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("run_deepwalk");
    group.sample_size(10);
    let train = TrainConfig {
        init: InitMode::InfBall(0.01),
        stopping: Stopping::FixedIters(100),
        ..TrainConfig::new(0.01)
    };
    group.bench_function("n600_d1_100iters", |b| {
        b.iter(|| run_deepwalk(&cooc.values, &train, None).unwrap())
    });
    group.finish();

    let mut group = c.benchmark_group("build_linear_update");
    group.sample_size(10);
    group.bench_function("n600", |b| {
        b.iter(|| build_linear_update(&cooc, 0.01, 3).unwrap())
    });
    group.finish();
}

criterion_group!(benches, walks, training);
criterion_main!(benches);
