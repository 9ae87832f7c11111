use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use kgmm_bench::{random_scores, small_dataset, toy_example};
use kgmm_core::eval::{auprc, auroc};
use kgmm_core::masking::sample_mask;
use kgmm_core::nn::Params;
use kgmm_core::seeded_rng;

fn model_passes(c: &mut Criterion) {
    let data = small_dataset();
    let (model, ex, opts) = toy_example(&data);
    c.bench_function("pretrain_forward_toy", |b| b.iter(|| model.evaluate(black_box(&ex), &opts).unwrap()));
    let mut grads = model.zeros_like();
    c.bench_function("pretrain_forward_backward_toy", |b| {
        b.iter(|| {
            grads.fill_zero();
            model.accumulate(black_box(&ex), &opts, &mut grads).unwrap()
        })
    });
}

fn metrics(c: &mut Criterion) {
    let (scores, labels) = random_scores(1000, 4, 0);
    c.bench_function("macro_auroc_1000x4", |b| b.iter(|| auroc(black_box(&scores), &labels).unwrap()));
    c.bench_function("macro_auprc_1000x4", |b| b.iter(|| auprc(black_box(&scores), &labels).unwrap()));
}

fn masking(c: &mut Criterion) {
    let mut rng = seeded_rng(0, "bench-mask");
    c.bench_function("sample_mask_64_075", |b| b.iter(|| sample_mask(black_box(64), 0.75, &mut rng).unwrap()));
}

fn datagen(c: &mut Criterion) {
    let mut group = c.benchmark_group("datagen");
    group.sample_size(10);
    group.bench_function("small_dataset", |b| b.iter(small_dataset));
    group.finish();
}

criterion_group!(benches, model_passes, metrics, masking, datagen);
criterion_main!(benches);
