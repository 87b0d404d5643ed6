use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cct_core::model::{BlockStyle, Model, ModelConfig, Positional};
use cct_core::sweep::{default_shrink_grid, run_shrink_sweep};
use cct_core::{
    masked_attention_path, stepwise_cct_attention, AttentionParams, DurationBiasMode, LabelSet,
    SpanSelector, StepwiseSentence, TokenSpan,
};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn bench_sentence(rng: &mut ChaCha8Rng, len: usize, d_model: usize) -> StepwiseSentence {
    let normal = Normal::new(0.0f32, 0.02).unwrap();
    let spans = (0..len)
        .map(|i| {
            let e = Array1::from_shape_fn(d_model, |_| normal.sample(rng));
            TokenSpan::new(e, 0.5 + (i % 4) as f64 * 0.5).unwrap()
        })
        .collect();
    StepwiseSentence::new(spans, 0.0).unwrap()
}

fn bench_model() -> Model {
    Model::init_random(
        3,
        ModelConfig {
            layer_count: 2,
            head_count: 4,
            d_model: 64,
            d_head: 16,
            vocab_size: 64,
            mlp_hidden: 0,
            block_style: BlockStyle::MinimalAddnorm,
            positional: Positional::Rotary,
            rotary_base: 10_000.0,
            rotary_dim: None,
            tied_unembed: true,
        },
    )
    .unwrap()
}

fn sweep_worker_counts(c: &mut Criterion) {
    let model = bench_model();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let prompt = {
        let normal = Normal::new(0.0f32, 0.02).unwrap();
        let spans = (0..24)
            .map(|i| {
                let e = Array1::from_shape_fn(64, |_| normal.sample(&mut rng));
                TokenSpan::new(e, 0.5 + (i % 4) as f64 * 0.5).unwrap()
            })
            .collect();
        StepwiseSentence::new(spans, 0.0).unwrap()
    };
    let labels = LabelSet::digits();
    let grid = default_shrink_grid();
    let selector = SpanSelector::new(4, 11);

    let mut group = c.benchmark_group("shrink_sweep");
    for workers in [1usize, 0] {
        let name = if workers == 1 { "sequential" } else { "parallel" };
        group.bench_with_input(BenchmarkId::from_parameter(name), &workers, |b, &w| {
            b.iter(|| {
                run_shrink_sweep(&model, &prompt, selector, &grid, &labels, "bench", w).unwrap()
            })
        });
    }
    group.finish();
}

fn attention_kernels(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let normal = Normal::new(0.0f32, 0.02).unwrap();
    let d_model = 64;
    let mut mat = |r: usize, cc: usize| Array2::from_shape_fn((r, cc), |_| normal.sample(&mut rng));
    let params = AttentionParams::new(
        mat(d_model, d_model),
        mat(d_model, d_model),
        mat(d_model, d_model),
        mat(d_model, d_model),
        4,
        16,
    )
    .unwrap();
    let sentence = bench_sentence(&mut rng, 48, d_model);

    let mut group = c.benchmark_group("attention_kernel");
    group.bench_function("stepwise_closed_form", |b| {
        b.iter(|| stepwise_cct_attention(&sentence, &params, DurationBiasMode::AdditiveLog).unwrap())
    });
    group.bench_function("masked_matrix_path", |b| {
        b.iter(|| masked_attention_path(&sentence, &params, DurationBiasMode::AdditiveLog).unwrap())
    });
    group.finish();
}

criterion_group!(benches, sweep_worker_counts, attention_kernels);
criterion_main!(benches);
