use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use longace_bench::{one_epoch, synthetic};
use longace_core::baselines::{fit_propensities, iterative_gcomp, ltmle_glm, msm_ipw, MsmOptions, RegressorSpec};
use longace_core::datagen::{generate, ground_truth_ace, DgpConfig, InterventionPlan};
use longace_core::deepace::{evaluate, train, Batch, ForwardOptions, Network, Standardizer};

fn datagen(c: &mut Criterion) {
    let mut group = c.benchmark_group("datagen");
    group.sample_size(10);
    group.bench_function("generate/1000x15", |b| {
        b.iter(|| generate(&DgpConfig::synthetic().with_seed(1)).unwrap())
    });
    let data = synthetic(1000, 15, 1);
    let (ones, zeros) = ([1u8; 15], [0u8; 15]);
    group.bench_function("ground_truth_ace/1000x15", |b| {
        b.iter(|| ground_truth_ace(&data, &ones, &zeros).unwrap())
    });
    group.finish();
}

fn deepace(c: &mut Criterion) {
    let mut group = c.benchmark_group("deepace");
    group.sample_size(10);
    for horizon in [3, 15] {
        let data = synthetic(64, horizon, 2);
        let plan = InterventionPlan::ones(horizon);
        let standardizer = Standardizer::fit(&data);
        let batch = Batch::full(&data, plan.as_slice(), &standardizer).unwrap();
        let net = Network::init(data.p, horizon, 12, 3).unwrap();
        group.bench_with_input(
            BenchmarkId::new("loss_and_gradient/batch64", horizon),
            &batch,
            |b, batch| b.iter(|| evaluate(&net, batch, &ForwardOptions::default(), 0.1, 0.05).unwrap()),
        );
    }
    let data = synthetic(256, 15, 4);
    let plan = InterventionPlan::ones(15);
    group.bench_function("train_epoch/256x15", |b| {
        b.iter_batched(
            one_epoch,
            |cfg| train(&data, &plan, &cfg).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn baselines(c: &mut Criterion) {
    let mut group = c.benchmark_group("baselines");
    group.sample_size(10);
    let data = synthetic(1000, 15, 5);
    let plan = [1u8; 15];
    let spec = RegressorSpec::default();
    let props = fit_propensities(&data, 1e-3).unwrap();
    group.bench_function("iterative_gcomp/1000x15", |b| {
        b.iter(|| iterative_gcomp(&data, &plan, &spec).unwrap())
    });
    group.bench_function("ltmle_glm/1000x15", |b| {
        b.iter(|| ltmle_glm(&data, &plan, &spec, &props).unwrap())
    });
    group.bench_function("fit_propensities/1000x15", |b| {
        b.iter(|| fit_propensities(&data, 1e-3).unwrap())
    });
    group.bench_function("msm_ipw/1000x15", |b| {
        b.iter(|| msm_ipw(&data, &plan, &[0u8; 15], &MsmOptions::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, datagen, deepace, baselines);
criterion_main!(benches);
