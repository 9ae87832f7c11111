use std::collections::HashSet;

use super::augment::{augment, AugmentationPolicy, Stage};
use super::optim::AdamW;
use super::schedule::Schedule;
use super::{accumulate_batch, batches};
use crate::config::{Mixing, TrainConfig};
use crate::error::{Error, Result};
use crate::manifest::{Modality, Record, Split};
use crate::model::{prepare_example, ExampleOptions, ObjectiveOptions, PretrainModel};
use crate::nn::{Params, Real};
use crate::objectives::LossReport;
use crate::rng::seeded_rng;
use crate::store::Dataset;
use crate::text::{build_vocab, expand_label, tokenize, KnowledgeBase, Vocabulary};

pub const METRICS_HEADER: &str = "step,epoch,mim,mlm,total,lr";

/// Batch-mean losses of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub epoch: usize,
    pub mim: f64,
    pub mlm: f64,
    pub total: f64,
    pub lr: f64,
}

impl StepMetrics {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:.9e},{:.9e},{:.9e},{:.9e}",
            self.step, self.epoch, self.mim, self.mlm, self.total, self.lr
        )
    }
}

/// Passed to the per-epoch callback.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochEnd {
    /// 1-based count of completed epochs.
    pub epoch: usize,
    pub step: usize,
    pub is_last: bool,
    pub mean_total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainOutcome {
    pub metrics: Vec<StepMetrics>,
    pub steps: usize,
}

impl PretrainOutcome {
    pub fn metrics_log(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for m in &self.metrics {
            out.push_str(&m.to_csv());
            out.push('\n');
        }
        out
    }
}

/// Word-level vocabulary over the knowledge base, capped at the model's size.
pub fn vocabulary_for(kb: &KnowledgeBase, vocab_size: usize) -> Result<Vocabulary> {
    build_vocab(&kb.corpus(), vocab_size)
}

fn epoch_order<'a>(records: &[&'a Record], cfg: &TrainConfig, epoch: usize) -> Vec<&'a Record> {
    let mut rng = seeded_rng(cfg.seed, &format!("shuffle/{epoch}"));
    match cfg.mixing {
        Mixing::Sample => {
            let mut order = records.to_vec();
            rng.shuffle(&mut order);
            order
        }
        Mixing::Alternate => {
            // whole batches of one modality, alternating while both last
            let mut pools: Vec<Vec<&Record>> = [Modality::A, Modality::B]
                .iter()
                .map(|&m| records.iter().copied().filter(|r| r.modality == m).collect())
                .collect();
            pools.iter_mut().for_each(|p| rng.shuffle(p));
            let mut chunks: Vec<Vec<Vec<&Record>>> = pools
                .into_iter()
                .map(|p| p.chunks(cfg.batch_size).map(<[_]>::to_vec).collect())
                .collect();
            let mut order = Vec::with_capacity(records.len());
            let longest = chunks.iter().map(Vec::len).max().unwrap_or(0);
            for i in 0..longest {
                for pool in chunks.iter_mut() {
                    if let Some(batch) = pool.get_mut(i) {
                        order.append(batch);
                    }
                }
            }
            order
        }
    }
}

/// Joint masked-image and masked-language pretraining on the train split of
/// `cfg.modalities`.
///
/// With text disabled the MLM term is 0 and the text decoder is frozen.
/// `on_epoch` runs after every epoch (checkpointing hooks in here).
pub fn pretrain(
    model: &mut PretrainModel<f32>,
    data: &Dataset,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochEnd, &PretrainModel<f32>) -> Result<()>,
) -> Result<PretrainOutcome> {
    cfg.validate("pretrain")?;
    let mcfg = model.config.clone();
    let records = data.manifest.select(Split::Train, cfg.modalities);
    if records.is_empty() {
        return Err(Error::EmptySplit(format!("no train records for modality pool {}", cfg.modalities)));
    }
    for r in &records {
        if !data.store.entry(&r.id).is_some_and(|e| e.image.is_some() && e.hr.is_some()) {
            return Err(Error::Image {
                path: r.id.clone().into(),
                reason: "image or high-resolution source missing".into(),
            });
        }
    }
    if data.store.image_size != mcfg.image_size || data.store.hr_factor != mcfg.hr_factor {
        return Err(Error::Shape(format!(
            "store holds {}px images at {}× but the model expects {}px at {}×",
            data.store.image_size, data.store.hr_factor, mcfg.image_size, mcfg.hr_factor
        )));
    }
    let vocab = if cfg.text_enabled {
        let labels: HashSet<&str> = records.iter().map(|r| r.label.as_str()).collect();
        if let Some(missing) = labels.iter().find(|l| !data.kb.contains(l)) {
            return Err(Error::UnknownLabel(missing.to_string()));
        }
        Some(vocabulary_for(&data.kb, mcfg.vocab_size)?)
    } else {
        None
    };

    let steps_per_epoch = records.len().div_ceil(cfg.batch_size);
    let schedule = Schedule::from_train(cfg, steps_per_epoch)?;
    let policy = AugmentationPolicy::new(Stage::Pretrain, cfg);
    let example_opts = ExampleOptions::from_train(cfg, vocab.as_ref().map_or(0, Vocabulary::len));
    let objective = ObjectiveOptions::from_train(cfg);
    let mut optimizer = AdamW::from_train(cfg);
    let text_enabled = cfg.text_enabled;
    let trainable = move |name: &str| text_enabled || !name.starts_with("text_decoder");

    let mut metrics = Vec::with_capacity(cfg.epochs * steps_per_epoch);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let order = epoch_order(&records, cfg, epoch);
        let mut epoch_total = 0.0;
        for batch in batches(&order, cfg.batch_size) {
            let lr = schedule.lr_at(step)?;
            let work = |record: &&Record, grads: &mut PretrainModel<f32>| -> Result<LossReport> {
                let key = format!("{epoch}/{}", record.id);
                let image = data.store.image(&record.id)?;
                let hr = data.store.hr(&record.id)?;
                let (image, hr) = augment(&image, Some(&hr), &policy, &mut seeded_rng(cfg.seed, &format!("aug/{key}")));
                let text = match &vocab {
                    Some(v) => {
                        let desc =
                            expand_label(&record.label, &data.kb, &mut seeded_rng(cfg.seed, &format!("desc/{key}")))?;
                        Some(tokenize(desc, v, mcfg.max_text_len))
                    }
                    None => None,
                };
                let ex = prepare_example::<f32>(
                    &mcfg,
                    &example_opts,
                    &image,
                    &hr.expect("hr source passed in"),
                    text.as_ref(),
                    &mut seeded_rng(cfg.seed, &format!("image-mask/{key}")),
                    &mut seeded_rng(cfg.seed, &format!("text-mask/{key}")),
                )?;
                model.accumulate(&ex, &objective, grads)
            };
            let (mut grads, reports) = accumulate_batch(&*model, batch, work).map_err(|e| match e {
                Error::NonFinite(detail) => Error::Divergence { step, detail },
                other => other,
            })?;
            let n = reports.len() as f64;
            let mean = |f: fn(&LossReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
            let m = StepMetrics {
                step,
                epoch,
                mim: mean(|r| r.mim),
                mlm: mean(|r| r.mlm),
                total: mean(|r| r.total),
                lr,
            };
            if !m.total.is_finite() {
                return Err(Error::Divergence {
                    step,
                    detail: format!("mim={}, mlm={}", m.mim, m.mlm),
                });
            }
            grads.scale(f32::c(1.0 / n));
            optimizer.step(model, &grads, lr, &trainable);
            epoch_total += m.total;
            metrics.push(m);
            log::debug!("step {step} epoch {epoch} total {:.5} lr {lr:.3e}", m.total);
            step += 1;
        }
        let end = EpochEnd {
            epoch: epoch + 1,
            step,
            is_last: epoch + 1 == cfg.epochs,
            mean_total: epoch_total / steps_per_epoch as f64,
        };
        log::info!("pretrain epoch {}/{}: mean loss {:.5}", end.epoch, cfg.epochs, end.mean_total);
        on_epoch(&end, model)?;
    }
    Ok(PretrainOutcome { metrics, steps: step })
}
