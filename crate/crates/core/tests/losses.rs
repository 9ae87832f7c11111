mod support;

use kgmm_core::config::Reduction;
use kgmm_core::model::{ObjectiveOptions, PretrainModel};
use kgmm_core::objectives::{mlm_loss, LossWeights};
use support::checks;

#[test]
fn unmasked_targets_and_logits_never_matter() {
    let o = checks::masked_only_invariance(200);
    assert!(o.pass, "{}", o.detail);
}

#[test]
fn losses_match_scalar_oracles() {
    let o = checks::loss_oracles(200);
    assert!(o.pass, "{}", o.detail);
}

#[test]
fn sum_reduction_is_mean_times_count() {
    let (_, ex) = support::micro_problem(3);
    let model = PretrainModel::<f64>::new(&kgmm_core::ModelConfig::micro(), 3).unwrap();
    let pass = model.forward(&ex).unwrap();
    let record = ex.text.as_ref().unwrap();
    let logits = pass.logits.unwrap();
    let mean = mlm_loss(&logits, record, Reduction::Mean).unwrap();
    let sum = mlm_loss(&logits, record, Reduction::Sum).unwrap();
    approx::assert_relative_eq!(sum, mean * record.mask_positions.len() as f64, max_relative = 1e-12);
}

#[test]
fn mim_only_weights_drop_the_text_term() {
    let (model, ex) = support::micro_problem(4);
    let both = model.evaluate(&ex, &ObjectiveOptions::default()).unwrap();
    let opts = ObjectiveOptions {
        weights: LossWeights { mim: 1.0, mlm: 0.0 },
        ..ObjectiveOptions::default()
    };
    let mim_only = model.evaluate(&ex, &opts).unwrap();
    assert_eq!(mim_only.total, both.mim);
    assert_eq!(mim_only.mim.to_bits(), both.mim.to_bits());
    approx::assert_relative_eq!(both.total, both.mim + both.mlm, max_relative = 1e-12);
}
