use crate::config::{ModelConfig, TrainConfig};
use crate::error::Result;
use crate::manifest::Split;
use crate::model::{Encoder, PretrainModel};
use crate::store::Dataset;
use crate::train::{finetune, pretrain, FinetuneOutcome, PretrainOutcome, Task};
use crate::Classifier;

use super::metrics::{predict, MetricsReport};

pub struct PretrainRun {
    pub model: PretrainModel<f32>,
    pub outcome: PretrainOutcome,
}

/// Initialize from `cfg.seed` and pretrain without per-epoch hooks.
pub fn run_pretrain(mcfg: &ModelConfig, data: &Dataset, cfg: &TrainConfig) -> Result<PretrainRun> {
    let mut model = PretrainModel::new(mcfg, cfg.seed)?;
    let outcome = pretrain(&mut model, data, cfg, &mut |_, _| Ok(()))?;
    Ok(PretrainRun { model, outcome })
}

/// Test-split metrics of `clf` on `task`.
pub fn test_report(clf: &Classifier<f32>, data: &Dataset, task: &Task, dataset_id: &str, seed: u64) -> Result<MetricsReport> {
    let test = task.records(&data.manifest, Split::Test);
    let labels = task.labels(&test)?;
    MetricsReport::compute(dataset_id, &predict(clf, data, &test)?, &labels, seed)
}

/// Fine-tune, keep the best validation epoch, and score it on the test split.
pub fn finetune_and_test(
    mcfg: &ModelConfig,
    encoder: Encoder<f32>,
    data: &Dataset,
    task: &Task,
    cfg: &TrainConfig,
    dataset_id: &str,
) -> Result<(FinetuneOutcome, MetricsReport)> {
    let outcome = finetune(mcfg, encoder, data, task, cfg)?;
    let report = test_report(&outcome.classifier, data, task, dataset_id, cfg.seed)?;
    Ok((outcome, report))
}
