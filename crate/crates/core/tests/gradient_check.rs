mod support;

use std::time::Instant;

use kgmm_core::model::ObjectiveOptions;
use kgmm_core::nn::Params;
use support::{gradient_check, micro_problem};

#[test]
fn analytic_gradients_match_central_differences() {
    let start = Instant::now();
    for seed in [1, 2, 3, 4, 5, 6] {
        let report = gradient_check(seed, 1e-4, 1e-4, 1e-5);
        for f in report.failures.iter().take(20) {
            eprintln!("{} analytic={:e} numeric={:e} rel={:e}", f.0, f.1, f.2, f.3);
        }
        assert!(report.failures.is_empty(), "{} of {} parameters off", report.failures.len(), report.checked);
        eprintln!("seed {seed}: {} parameters, max rel error {:e}", report.checked, report.max_rel);
    }
    assert!(start.elapsed().as_secs() < 120);
}

#[test]
fn both_branches_reach_the_encoder() {
    let (model, ex) = micro_problem(5);
    let opts = ObjectiveOptions::default();

    let mut full = model.zeros_like();
    model.accumulate(&ex, &opts, &mut full).unwrap();
    let mut image_only_ex = ex.clone();
    image_only_ex.text = None;
    let mut image_only = model.zeros_like();
    model.accumulate(&image_only_ex, &opts, &mut image_only).unwrap();

    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(norm(&full.encoder.flatten()) > 0.0);
    assert!(norm(&image_only.encoder.flatten()) > 0.0);
    let diff: Vec<f64> = full
        .encoder
        .flatten()
        .iter()
        .zip(image_only.encoder.flatten())
        .map(|(a, b)| a - b)
        .collect();
    assert!(norm(&diff) > 0.0, "text branch contributes no encoder gradient");
    assert!(image_only.text_decoder.flatten().iter().all(|&g| g == 0.0));
}
