//! Masked image modeling and image-conditioned masked language modeling losses.

use ndarray::Array2;

use crate::config::Reduction;
use crate::error::{Error, Result};
use crate::masking::{HrTargetSet, MaskVector};
use crate::nn::Real;
use crate::text::TokenRecord;

/// Loss values of one example or one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub mim: f64,
    pub mlm: f64,
    pub total: f64,
    pub masked_patch_count: usize,
    pub masked_token_count: usize,
}

/// Relative weights of the two objectives; `(1, 1)` is the plain sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub mim: f64,
    pub mlm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { mim: 1.0, mlm: 1.0 }
    }
}

fn check_targets<F: Real>(recon: &Array2<F>, targets: &HrTargetSet<F>, mask: &MaskVector) -> Result<()> {
    if recon.nrows() != mask.len() {
        return Err(Error::Shape(format!(
            "{} reconstructions for a mask of {} patches",
            recon.nrows(),
            mask.len()
        )));
    }
    if targets.targets.ncols() != recon.ncols() {
        return Err(Error::Shape(format!(
            "target patch length {} vs reconstruction length {}",
            targets.targets.ncols(),
            recon.ncols()
        )));
    }
    if targets.targets.nrows() != targets.positions.len() || targets.positions != mask.masked_positions() {
        return Err(Error::Shape("targets are not aligned with the masked positions".into()));
    }
    Ok(())
}

/// Squared error summed over pixels of each masked patch, then summed or
/// averaged over masked patches. Unmasked positions are never read.
pub fn mim_loss<F: Real>(
    recon: &Array2<F>,
    targets: &HrTargetSet<F>,
    mask: &MaskVector,
    reduction: Reduction,
) -> Result<F> {
    check_targets(recon, targets, mask)?;
    let mut total = F::zero();
    for (t, &p) in targets.positions.iter().enumerate() {
        let sse: F = targets
            .targets
            .row(t)
            .iter()
            .zip(recon.row(p))
            .map(|(&y, &x)| (x - y) * (x - y))
            .sum();
        total += sse;
    }
    Ok(reduce(total, targets.positions.len(), reduction))
}

/// [`mim_loss`] and its gradient w.r.t. every reconstruction (zero rows at
/// unmasked positions).
pub fn mim_loss_grad<F: Real>(
    recon: &Array2<F>,
    targets: &HrTargetSet<F>,
    mask: &MaskVector,
    reduction: Reduction,
) -> Result<(F, Array2<F>)> {
    let loss = mim_loss(recon, targets, mask, reduction)?;
    let k = targets.positions.len();
    let scale = match reduction {
        Reduction::Mean if k > 0 => F::c(2.0 / k as f64),
        _ => F::c(2.0),
    };
    let mut grad = Array2::zeros(recon.raw_dim());
    for (t, &p) in targets.positions.iter().enumerate() {
        let mut g = grad.row_mut(p);
        for ((g, &x), &y) in g.iter_mut().zip(recon.row(p)).zip(targets.targets.row(t)) {
            *g = scale * (x - y);
        }
    }
    Ok((loss, grad))
}

fn reduce<F: Real>(total: F, count: usize, reduction: Reduction) -> F {
    match reduction {
        Reduction::Mean if count > 0 => total / F::c(count as f64),
        _ => total,
    }
}

fn check_logits<F: Real>(logits: &Array2<F>, record: &TokenRecord) -> Result<()> {
    if record.mask_positions.is_empty() {
        return Err(Error::EmptyMaskedSet("text record has no masked positions"));
    }
    if logits.nrows() != record.len() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} text positions",
            logits.nrows(),
            record.len()
        )));
    }
    if let Some(&bad) = record.original_ids.iter().find(|&&id| id as usize >= logits.ncols()) {
        return Err(Error::Shape(format!("token id {bad} outside vocabulary of {}", logits.ncols())));
    }
    Ok(())
}

/// Negative log-likelihood of the original ids at the masked positions.
pub fn mlm_loss<F: Real>(logits: &Array2<F>, record: &TokenRecord, reduction: Reduction) -> Result<F> {
    Ok(mlm_loss_grad(logits, record, reduction)?.0)
}

/// [`mlm_loss`] and its gradient w.r.t. the logits (zero rows outside the
/// masked set).
pub fn mlm_loss_grad<F: Real>(
    logits: &Array2<F>,
    record: &TokenRecord,
    reduction: Reduction,
) -> Result<(F, Array2<F>)> {
    check_logits(logits, record)?;
    let k = record.mask_positions.len();
    let scale = match reduction {
        Reduction::Mean => F::one() / F::c(k as f64),
        Reduction::Sum => F::one(),
    };
    let mut total = F::zero();
    let mut grad = Array2::zeros(logits.raw_dim());
    for (&p, &target) in record.mask_positions.iter().zip(&record.original_ids) {
        let row = logits.row(p);
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let sum_exp: F = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        total += log_z - row[target as usize];
        let mut g = grad.row_mut(p);
        for (g, &v) in g.iter_mut().zip(row.iter()) {
            *g = (v - log_z).exp() * scale;
        }
        g[target as usize] -= scale;
    }
    Ok((total * scale, grad))
}

/// Weighted sum of the two objectives.
pub fn total_loss(mim: f64, mlm: f64, weights: LossWeights) -> Result<LossReport> {
    if !mim.is_finite() || !mlm.is_finite() {
        return Err(Error::NonFinite(format!("mim={mim}, mlm={mlm}")));
    }
    Ok(LossReport {
        mim,
        mlm,
        total: weights.mim * mim + weights.mlm * mlm,
        ..LossReport::default()
    })
}
