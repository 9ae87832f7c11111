//! The three networks: a modality-agnostic image encoder, a high-resolution
//! image decoder, and an image-conditioned text decoder; plus the
//! fine-tuning classifier built on the encoder.

mod classifier;
mod encoder;
mod image_decoder;
mod text_decoder;

use ndarray::Array2;

pub use classifier::{softmax_rows, Classifier};
pub use encoder::{Encoder, EncoderCache, EncoderOutput};
pub use image_decoder::{ImageDecoder, ImageDecoderCache};
pub use text_decoder::{TextDecoder, TextDecoderCache};

use crate::config::{MlmReplacement, ModelConfig, Reduction, TrainConfig};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::masking::{
    apply_mask, make_hr_targets, normalize_rows, patchify, sample_mask, HrTargetSet, MaskVector, VisiblePatches,
};
use crate::nn::{join, ParamKind, Params, Real};
use crate::objectives::{mim_loss_grad, mlm_loss_grad, total_loss, LossReport, LossWeights};
use crate::rng::{seeded_rng, RandomStream};
use crate::text::{mask_tokens, TokenRecord};

/// Per-example corruption settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExampleOptions {
    pub mask_ratio_image: f64,
    pub mask_ratio_text: f64,
    pub mlm_replacement: MlmReplacement,
    pub norm_pix_loss: bool,
    /// Size of the tokenizer vocabulary (random replacement range).
    pub vocab_len: usize,
}

impl ExampleOptions {
    pub fn from_train(train: &TrainConfig, vocab_len: usize) -> Self {
        Self {
            mask_ratio_image: train.mask_ratio_image,
            mask_ratio_text: train.mask_ratio_text,
            mlm_replacement: train.mlm_replacement,
            norm_pix_loss: train.norm_pix_loss,
            vocab_len,
        }
    }
}

/// How the two losses are reduced and combined.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveOptions {
    pub mim_reduction: Reduction,
    pub mlm_reduction: Reduction,
    pub weights: LossWeights,
}

impl Default for ObjectiveOptions {
    fn default() -> Self {
        Self {
            mim_reduction: Reduction::Mean,
            mlm_reduction: Reduction::Mean,
            weights: LossWeights::default(),
        }
    }
}

impl ObjectiveOptions {
    pub fn from_train(train: &TrainConfig) -> Self {
        Self {
            mim_reduction: train.mim_reduction,
            mlm_reduction: train.mlm_reduction,
            weights: LossWeights {
                mim: train.loss_weight_mim,
                mlm: train.loss_weight_mlm,
            },
        }
    }
}

/// One masked training example: visible patches, their mask, the
/// high-resolution targets of the masked patches, and the masked text.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainExample<F> {
    pub visible: VisiblePatches<F>,
    pub mask: MaskVector,
    pub targets: HrTargetSet<F>,
    /// `None` when text supervision is off.
    pub text: Option<TokenRecord>,
}

/// Draw one image mask and (when text is present) one text mask.
///
/// The two draws use separate streams, so switching the text branch off does
/// not change the image mask.
pub fn prepare_example<F: Real>(
    config: &ModelConfig,
    opts: &ExampleOptions,
    image: &Image,
    hr_source: &Image,
    text: Option<&TokenRecord>,
    image_rng: &mut RandomStream,
    text_rng: &mut RandomStream,
) -> Result<PretrainExample<F>> {
    if image.side != config.image_size || image.channels != config.channels {
        return Err(Error::Shape(format!(
            "image {}×{}×{} does not match model input {}×{}×{}",
            image.side, image.side, image.channels, config.image_size, config.image_size, config.channels
        )));
    }
    let patches = patchify::<F>(image, config.patch_size)?;
    let mask = sample_mask(patches.len(), opts.mask_ratio_image, image_rng)?;
    let visible = apply_mask(&patches, &mask)?;
    let mut targets = make_hr_targets(hr_source, &mask, config.patch_size, config.hr_factor, config.image_size)?;
    if opts.norm_pix_loss {
        normalize_rows(&mut targets.targets);
    }
    let text = text
        .map(|r| mask_tokens(r, opts.mask_ratio_text, opts.mlm_replacement, opts.vocab_len, text_rng))
        .transpose()?;
    Ok(PretrainExample {
        visible,
        mask,
        targets,
        text,
    })
}

/// Encoder plus both pretraining decoders.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainModel<F> {
    pub config: ModelConfig,
    pub encoder: Encoder<F>,
    pub image_decoder: ImageDecoder<F>,
    pub text_decoder: TextDecoder<F>,
}

/// Activations of one forward pass, kept for the backward pass.
pub struct PretrainPass<F> {
    pub encoded: EncoderOutput<F>,
    pub reconstructions: Array2<F>,
    pub logits: Option<Array2<F>>,
    encoder_cache: EncoderCache<F>,
    image_cache: ImageDecoderCache<F>,
    text_cache: Option<TextDecoderCache<F>>,
}

impl<F: Real> PretrainModel<F> {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(seed, "init");
        Ok(Self {
            config: config.clone(),
            encoder: Encoder::new(config, &mut rng.fork("encoder")),
            image_decoder: ImageDecoder::new(config, &mut rng.fork("image_decoder")),
            text_decoder: TextDecoder::new(config, &mut rng.fork("text_decoder")),
        })
    }

    /// One shared encoding feeds both decoders.
    pub fn forward(&self, ex: &PretrainExample<F>) -> Result<PretrainPass<F>> {
        let (encoded, encoder_cache) = self.encoder.forward(&ex.visible.patches, &ex.visible.positions)?;
        let (reconstructions, image_cache) =
            self.image_decoder
                .forward(&encoded.patch_latents, &encoded.visible_positions, &ex.mask)?;
        let (logits, text_cache) = match &ex.text {
            Some(record) => {
                let (l, c) = self.text_decoder.forward(record, &encoded.pooled)?;
                (Some(l), Some(c))
            }
            None => (None, None),
        };
        Ok(PretrainPass {
            encoded,
            reconstructions,
            logits,
            encoder_cache,
            image_cache,
            text_cache,
        })
    }

    fn losses(
        &self,
        reconstructions: &Array2<F>,
        logits: Option<&Array2<F>>,
        ex: &PretrainExample<F>,
        opts: &ObjectiveOptions,
    ) -> Result<(LossReport, Array2<F>, Option<Array2<F>>)> {
        let (mim, mut d_recon) = mim_loss_grad(reconstructions, &ex.targets, &ex.mask, opts.mim_reduction)?;
        d_recon *= F::c(opts.weights.mim);
        let (mlm, d_logits) = match (logits, &ex.text) {
            (Some(logits), Some(record)) => {
                let (l, mut g) = mlm_loss_grad(logits, record, opts.mlm_reduction)?;
                g *= F::c(opts.weights.mlm);
                (l.as_f64(), Some(g))
            }
            _ => (0.0, None),
        };
        let mut report = total_loss(mim.as_f64(), mlm, opts.weights)?;
        report.masked_patch_count = ex.mask.masked_count;
        report.masked_token_count = ex.text.as_ref().map_or(0, |t| t.mask_positions.len());
        Ok((report, d_recon, d_logits))
    }

    /// Loss without gradient bookkeeping.
    pub fn evaluate(&self, ex: &PretrainExample<F>, opts: &ObjectiveOptions) -> Result<LossReport> {
        let encoded = self.encoder.infer(&ex.visible.patches, &ex.visible.positions)?;
        let recon = self
            .image_decoder
            .infer(&encoded.patch_latents, &encoded.visible_positions, &ex.mask)?;
        let logits = ex
            .text
            .as_ref()
            .map(|r| self.text_decoder.infer(r, &encoded.pooled))
            .transpose()?;
        Ok(self.losses(&recon, logits.as_ref(), ex, opts)?.0)
    }

    /// Forward, loss, and backward for one example; gradients are added into `grads`.
    pub fn accumulate(&self, ex: &PretrainExample<F>, opts: &ObjectiveOptions, grads: &mut Self) -> Result<LossReport> {
        let pass = self.forward(ex)?;
        let (report, d_recon, d_logits) = self.losses(&pass.reconstructions, pass.logits.as_ref(), ex, opts)?;
        let mut d_latents = self
            .image_decoder
            .backward(&pass.image_cache, &d_recon, &mut grads.image_decoder);
        if let (Some(cache), Some(d_logits)) = (&pass.text_cache, &d_logits) {
            let d_pooled = self.text_decoder.backward(cache, d_logits, &mut grads.text_decoder);
            encoder::add_pooled_grad(&mut d_latents, &d_pooled);
        }
        self.encoder.backward(&pass.encoder_cache, &d_latents, &mut grads.encoder);
        Ok(report)
    }
}

impl<F: Real> Params<F> for PretrainModel<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &[F])) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.image_decoder.visit(&join(prefix, "image_decoder"), f);
        self.text_decoder.visit(&join(prefix, "text_decoder"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut [F])) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.image_decoder.visit_mut(&join(prefix, "image_decoder"), f);
        self.text_decoder.visit_mut(&join(prefix, "text_decoder"), f);
    }
}
