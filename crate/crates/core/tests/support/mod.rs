//! Fixtures shared by the integration tests.
#![allow(dead_code)]

pub mod checks;

use kgmm_core::config::{MlmReplacement, ModelConfig};
use kgmm_core::model::{prepare_example, ExampleOptions, ObjectiveOptions, PretrainExample, PretrainModel};
use kgmm_core::nn::Params;
use kgmm_core::text::{build_vocab, tokenize};
use kgmm_core::{seeded_rng, Image};

/// Random image with values in [0, 1).
pub fn noise_image(side: usize, channels: usize, seed: u64, tag: &str) -> Image {
    let mut rng = seeded_rng(seed, tag);
    let data = (0..side * side * channels).map(|_| rng.uniform() as f32).collect();
    Image::from_data(side, channels, data).unwrap()
}

/// Micro model with its parameters spread out so every gradient is sizeable,
/// and one masked example with both branches active.
pub fn micro_problem(seed: u64) -> (PretrainModel<f64>, PretrainExample<f64>) {
    let cfg = ModelConfig::micro();
    let mut model = PretrainModel::<f64>::new(&cfg, seed).unwrap();
    let mut rng = seeded_rng(seed, "spread");
    model.visit_mut("", &mut |_, _, s| s.iter_mut().for_each(|v| *v += 0.2 * rng.normal()));

    let vocab = build_vocab(&["spots ring vessel haze", "disc cup fluid"], cfg.vocab_size).unwrap();
    assert_eq!(vocab.len(), cfg.vocab_size);
    let record = tokenize("vessel ring haze disc", &vocab, cfg.max_text_len);
    let hr = noise_image(cfg.image_size * cfg.hr_factor, cfg.channels, seed, "hr");
    let lo = hr.downsample(cfg.hr_factor).unwrap();
    let opts = ExampleOptions {
        mask_ratio_image: 0.5,
        mask_ratio_text: 0.5,
        mlm_replacement: MlmReplacement::Mask,
        norm_pix_loss: false,
        vocab_len: vocab.len(),
    };
    let ex = prepare_example(
        &cfg,
        &opts,
        &lo,
        &hr,
        Some(&record),
        &mut seeded_rng(seed, "image-mask"),
        &mut seeded_rng(seed, "text-mask"),
    )
    .unwrap();
    (model, ex)
}

pub struct GradCheck {
    pub checked: usize,
    pub failures: Vec<(String, f64, f64, f64)>,
    pub max_rel: f64,
}

/// Compare analytic gradients with central differences parameter by parameter.
/// Relative error is `|a − n| / max(|a|, |n|, floor)`.
pub fn gradient_check(seed: u64, step: f64, tol: f64, floor: f64) -> GradCheck {
    let (model, ex) = micro_problem(seed);
    let opts = ObjectiveOptions::default();
    let mut grads = model.zeros_like();
    model.accumulate(&ex, &opts, &mut grads).unwrap();
    let analytic = grads.flatten();
    let names: Vec<String> = model
        .param_names()
        .into_iter()
        .flat_map(|(name, _, len)| (0..len).map(move |i| format!("{name}[{i}]")))
        .collect();
    let base = model.flatten();
    let mut probe = model.clone();
    let mut failures = Vec::new();
    let mut max_rel: f64 = 0.0;
    for i in 0..base.len() {
        let mut flat = base.clone();
        flat[i] = base[i] + step;
        probe.load_flat(&flat);
        let plus = probe.evaluate(&ex, &opts).unwrap().total;
        flat[i] = base[i] - step;
        probe.load_flat(&flat);
        let minus = probe.evaluate(&ex, &opts).unwrap().total;
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        max_rel = max_rel.max(rel);
        if rel > tol {
            failures.push((names[i].clone(), a, numeric, rel));
        }
    }
    GradCheck {
        checked: base.len(),
        failures,
        max_rel,
    }
}
