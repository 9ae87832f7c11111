use ndarray::{Array1, Array2, Axis};

use super::Encoder;
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::masking::patchify;
use crate::nn::{join, Linear, ParamKind, Params, Real};
use crate::rng::seeded_rng;

/// Pretrained encoder with a linear head on the mean of all patch latents.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier<F> {
    pub config: ModelConfig,
    pub encoder: Encoder<F>,
    pub head: Linear<F>,
}

impl<F: Real> Classifier<F> {
    pub fn new(config: &ModelConfig, encoder: Encoder<F>, num_classes: usize, seed: u64) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::invalid("num_classes", format!("need at least 2 classes, got {num_classes}")));
        }
        let mut rng = seeded_rng(seed, "head");
        Ok(Self {
            config: config.clone(),
            head: Linear::new(encoder.width(), num_classes, &mut rng),
            encoder,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.head.output_dim()
    }

    fn all_positions(&self) -> Vec<usize> {
        (0..self.config.num_patches()).collect()
    }

    /// Class scores (logits); no masking.
    pub fn forward(&self, image: &Image) -> Result<Array1<F>> {
        let patches = patchify::<F>(image, self.config.patch_size)?;
        let out = self.encoder.infer(&patches.patches, &self.all_positions())?;
        Ok(self.head.forward(&out.pooled.insert_axis(Axis(0))).row(0).to_owned())
    }

    pub fn predict_proba(&self, image: &Image) -> Result<Vec<f64>> {
        let logits = self.forward(image)?.insert_axis(Axis(0));
        Ok(softmax_rows(&logits).row(0).iter().map(|v| v.as_f64()).collect())
    }

    /// Cross-entropy of one labelled image; gradients are added into `grads`.
    pub fn accumulate(&self, image: &Image, label: usize, grads: &mut Self) -> Result<f64> {
        if label >= self.num_classes() {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: self.num_classes(),
            });
        }
        let patches = patchify::<F>(image, self.config.patch_size)?;
        let positions = self.all_positions();
        let (out, cache) = self.encoder.forward(&patches.patches, &positions)?;
        let pooled = out.pooled.insert_axis(Axis(0));
        let logits = self.head.forward(&pooled);
        let probs = softmax_rows(&logits);
        let loss = -probs[[0, label]].ln().as_f64();
        let mut d_logits = probs;
        d_logits[[0, label]] -= F::one();
        let d_pooled = self.head.backward(&pooled, &d_logits, &mut grads.head);
        let n = F::c(positions.len() as f64);
        let mut d_latents = Array2::zeros(out.patch_latents.raw_dim());
        for mut row in d_latents.rows_mut() {
            row.assign(&(&d_pooled.row(0) / n));
        }
        self.encoder.backward(&cache, &d_latents, &mut grads.encoder);
        Ok(loss)
    }
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows<F: Real>(logits: &Array2<F>) -> Array2<F> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

impl<F: Real> Params<F> for Classifier<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &[F])) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut [F])) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}
