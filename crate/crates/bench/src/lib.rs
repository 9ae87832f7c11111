//! Shared fixtures for the criterion benchmarks.

use kgmm_core::datagen::{generate, SyntheticSpec};
use kgmm_core::model::{prepare_example, ExampleOptions, ObjectiveOptions, PretrainExample};
use kgmm_core::text::tokenize;
use kgmm_core::train::vocabulary_for;
use kgmm_core::{seeded_rng, Config, Dataset, PretrainModel, Split};

/// A small default-preset dataset (4 classes, 4 train images per class and modality).
pub fn small_dataset() -> Dataset {
    let mut config = Config::default();
    config.data.train_per_class = 4;
    config.data.val_per_class = 2;
    config.data.test_per_class = 2;
    let spec = SyntheticSpec::from_config(&config.data, &config.model).expect("valid spec");
    generate(&spec).expect("generation succeeds")
}

/// Toy model and one masked training example with text.
pub fn toy_example(data: &Dataset) -> (PretrainModel<f32>, PretrainExample<f32>, ObjectiveOptions) {
    let config = Config::default();
    let model = PretrainModel::<f32>::new(&config.model, 0).expect("toy config is valid");
    let vocab = vocabulary_for(&data.kb, config.model.vocab_size).expect("vocabulary");
    let record = data.manifest.select(Split::Train, config.pretrain.modalities)[0];
    let desc = &data.kb.descriptions(&record.label).expect("label in kb")[0];
    let text = tokenize(desc, &vocab, config.model.max_text_len);
    let opts = ExampleOptions::from_train(&config.pretrain, vocab.len());
    let ex = prepare_example(
        &config.model,
        &opts,
        &data.store.image(&record.id).expect("image"),
        &data.store.hr(&record.id).expect("hr"),
        Some(&text),
        &mut seeded_rng(0, "bench-image"),
        &mut seeded_rng(0, "bench-text"),
    )
    .expect("example");
    (model, ex, ObjectiveOptions::from_train(&config.pretrain))
}

/// Random class scores and labels for `n` samples over `k` classes.
pub fn random_scores(n: usize, k: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = seeded_rng(seed, "bench-scores");
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let scores = (0..n).map(|_| (0..k).map(|_| rng.uniform()).collect()).collect();
    (scores, labels)
}
