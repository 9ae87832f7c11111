//! Pretraining and fine-tuning loops with their schedule, optimizer and
//! augmentations.
//!
//! Every random draw is keyed by `(seed, purpose, epoch, record id)`, and a
//! batch's per-sample gradients are summed in fixed chunks in batch order.
//! Results therefore do not depend on thread scheduling.

mod augment;
mod finetune;
mod optim;
mod pretrain;
mod schedule;

pub use augment::{augment, color_jitter, AugmentationPolicy, Stage};
pub use finetune::{finetune, stratified_subsample, EpochRecord, FinetuneOutcome, Task};
pub use optim::AdamW;
pub use pretrain::{pretrain, vocabulary_for, EpochEnd, PretrainOutcome, StepMetrics, METRICS_HEADER};
pub use schedule::{lr_at, Schedule};

use rayon::prelude::*;

use crate::error::Result;
use crate::nn::{Params, Real};

/// Samples per parallel work unit; fixed so the summation order is too.
const CHUNK: usize = 4;

/// Run `work` on every item, each adding its gradient into a per-chunk
/// buffer; buffers are summed in chunk order.
fn accumulate_batch<F, M, T, R>(model: &M, items: &[T], work: impl Fn(&T, &mut M) -> Result<R> + Sync) -> Result<(M, Vec<R>)>
where
    F: Real,
    M: Params<F> + Clone + Send + Sync,
    T: Sync,
    R: Send,
{
    let parts: Vec<(M, Vec<R>)> = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = model.zeros_like();
            let results = chunk.iter().map(|item| work(item, &mut grads)).collect::<Result<Vec<R>>>()?;
            Ok((grads, results))
        })
        .collect::<Result<_>>()?;
    let mut parts = parts.into_iter();
    let (mut total, mut results) = parts.next().unwrap_or_else(|| (model.zeros_like(), Vec::new()));
    for (g, r) in parts {
        total.add_assign_from(&g);
        results.extend(r);
    }
    Ok((total, results))
}

/// Batches of consecutive items; the last one may be short.
fn batches<T>(items: &[T], batch_size: usize) -> impl Iterator<Item = &[T]> {
    items.chunks(batch_size.max(1))
}
