use std::collections::BTreeMap;

use super::augment::{augment, AugmentationPolicy, Stage};
use super::optim::AdamW;
use super::schedule::Schedule;
use super::{accumulate_batch, batches};
use crate::config::{ModalityPool, ModelConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{auroc, predict};
use crate::manifest::{DatasetManifest, Modality, Record, Split};
use crate::model::{Classifier, Encoder};
use crate::nn::{Params, Real};
use crate::rng::seeded_rng;
use crate::store::Dataset;

/// A classification task: records of one modality pool, labels indexed by
/// their position in `classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub pool: ModalityPool,
    pub classes: Vec<String>,
}

impl Task {
    /// All labels of the manifest, in sorted order.
    pub fn new(manifest: &DatasetManifest, pool: ModalityPool) -> Self {
        Self {
            pool,
            classes: manifest.class_names(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn records<'a>(&self, manifest: &'a DatasetManifest, split: Split) -> Vec<&'a Record> {
        manifest.select(split, self.pool)
    }

    pub fn labels(&self, records: &[&Record]) -> Result<Vec<usize>> {
        records.iter().map(|r| self.label_index(&r.label)).collect()
    }
}

/// Keep `round(fraction·n)` records of every (modality, label) group.
///
/// Each group is shuffled once per seed and a prefix kept, so smaller
/// fractions select subsets of larger ones. The input order is preserved, and
/// a fraction of 1 returns the input unchanged.
pub fn stratified_subsample<'a>(records: &[&'a Record], fraction: f64, seed: u64) -> Result<Vec<&'a Record>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Stratification(format!("fraction {fraction} outside (0, 1]")));
    }
    if fraction == 1.0 {
        return Ok(records.to_vec());
    }
    let mut groups: BTreeMap<(Modality, &str), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry((r.modality, r.label.as_str())).or_default().push(i);
    }
    let mut keep = vec![false; records.len()];
    for ((modality, label), mut members) in groups {
        let k = (fraction * members.len() as f64).round() as usize;
        if k == 0 {
            return Err(Error::Stratification(format!(
                "fraction {fraction} leaves no samples of class `{label}` in modality {modality} ({} available)",
                members.len()
            )));
        }
        seeded_rng(seed, &format!("subsample/{modality}/{label}")).shuffle(&mut members);
        for &i in &members[..k] {
            keep[i] = true;
        }
    }
    Ok(records.iter().zip(keep).filter(|(_, k)| *k).map(|(r, _)| *r).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auroc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneOutcome {
    /// Weights of the epoch with the highest validation AUROC.
    pub classifier: Classifier<f32>,
    pub best_epoch: usize,
    pub best_val_auroc: f64,
    pub history: Vec<EpochRecord>,
    pub train_size: usize,
    pub steps: usize,
}

/// Train `encoder` plus a fresh linear head end-to-end with cross-entropy on
/// the train split of `task` (subsampled to `cfg.label_fraction`).
///
/// After every epoch the validation AUROC is measured; the best epoch wins,
/// ties going to the earlier one.
pub fn finetune(
    mcfg: &ModelConfig,
    encoder: Encoder<f32>,
    data: &Dataset,
    task: &Task,
    cfg: &TrainConfig,
) -> Result<FinetuneOutcome> {
    cfg.validate("finetune")?;
    let all_train = task.records(&data.manifest, Split::Train);
    let train = stratified_subsample(&all_train, cfg.label_fraction, cfg.seed)?;
    let val = task.records(&data.manifest, Split::Val);
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptySplit(format!(
            "task on pool {} has {} train and {} val records",
            task.pool,
            train.len(),
            val.len()
        )));
    }
    let train_labels = task.labels(&train)?;
    let val_labels = task.labels(&val)?;
    let items: Vec<(&Record, usize)> = train.iter().copied().zip(train_labels).collect();

    let mut clf = Classifier::new(mcfg, encoder, task.num_classes(), cfg.seed)?;
    let steps_per_epoch = items.len().div_ceil(cfg.batch_size);
    let schedule = Schedule::from_train(cfg, steps_per_epoch)?;
    let policy = AugmentationPolicy::new(Stage::Finetune, cfg);
    let mut optimizer = AdamW::from_train(cfg);

    let mut best: Option<(Classifier<f32>, usize, f64)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order = items.clone();
        seeded_rng(cfg.seed, &format!("ft-shuffle/{epoch}")).shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in batches(&order, cfg.batch_size) {
            let lr = schedule.lr_at(step)?;
            let work = |(record, label): &(&Record, usize), grads: &mut Classifier<f32>| -> Result<f64> {
                let image = data.store.image(&record.id)?;
                let mut rng = seeded_rng(cfg.seed, &format!("ft-aug/{epoch}/{}", record.id));
                let (image, _) = augment(&image, None, &policy, &mut rng);
                clf.accumulate(&image, *label, grads)
            };
            let (mut grads, losses) = accumulate_batch(&clf, batch, work)?;
            let n = losses.len() as f64;
            let loss = losses.iter().sum::<f64>() / n;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    step,
                    detail: format!("cross-entropy {loss}"),
                });
            }
            grads.scale(f32::c(1.0 / n));
            optimizer.step(&mut clf, &grads, lr, &|_| true);
            loss_sum += loss * n;
            step += 1;
        }
        let scores = predict(&clf, data, &val)?;
        let val_auroc = auroc(&scores, &val_labels)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / items.len() as f64,
            val_auroc,
        };
        log::info!(
            "finetune epoch {}/{}: loss {:.4}, val AUROC {:.2}",
            record.epoch,
            cfg.epochs,
            record.train_loss,
            val_auroc
        );
        history.push(record);
        if best.as_ref().is_none_or(|b| val_auroc > b.2) {
            best = Some((clf.clone(), epoch + 1, val_auroc));
        }
    }
    let (classifier, best_epoch, best_val_auroc) = best.expect("at least one epoch");
    Ok(FinetuneOutcome {
        classifier,
        best_epoch,
        best_val_auroc,
        history,
        train_size: items.len(),
        steps: step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(per_group: usize) -> Vec<Record> {
        let mut out = Vec::new();
        for m in [Modality::A, Modality::B] {
            for label in ["c00", "c01"] {
                for i in 0..per_group {
                    out.push(Record {
                        id: format!("{m}-{label}-{i}"),
                        modality: m,
                        label: label.into(),
                        split: Split::Train,
                    });
                }
            }
        }
        out
    }

    #[test]
    fn keeps_every_group_in_proportion() {
        let all = records(20);
        let refs: Vec<&Record> = all.iter().collect();
        let sub = stratified_subsample(&refs, 0.25, 3).unwrap();
        assert_eq!(sub.len(), 20);
        for m in [Modality::A, Modality::B] {
            for label in ["c00", "c01"] {
                assert_eq!(sub.iter().filter(|r| r.modality == m && r.label == label).count(), 5);
            }
        }
    }

    #[test]
    fn smaller_fractions_are_nested_and_full_fraction_is_identity() {
        let all = records(20);
        let refs: Vec<&Record> = all.iter().collect();
        let small = stratified_subsample(&refs, 0.1, 9).unwrap();
        let large = stratified_subsample(&refs, 0.5, 9).unwrap();
        assert!(small.iter().all(|r| large.iter().any(|l| l.id == r.id)));
        assert_eq!(stratified_subsample(&refs, 1.0, 9).unwrap(), refs);
    }

    #[test]
    fn emptying_a_class_is_an_error() {
        let all = records(3);
        let refs: Vec<&Record> = all.iter().collect();
        assert!(matches!(stratified_subsample(&refs, 0.1, 0), Err(Error::Stratification(_))));
    }
}
