use ndarray::{Array1, Array2, Axis};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::masking::{build_masked_sequence, MaskVector};
use crate::nn::{
    join, sincos_2d, trunc_normal_vec, vslice, vslice_mut, Linear, ParamKind, Params, Real, Transformer,
    TransformerCache,
};
use crate::rng::RandomStream;

/// Rebuilds the full patch sequence (visible latents plus a shared mask token)
/// and predicts every patch at `hr_factor×` resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageDecoder<F> {
    pub embed: Linear<F>,
    pub mask_token: Array1<F>,
    pub transformer: Transformer<F>,
    pub pred: Linear<F>,
    pos: Array2<F>,
}

#[derive(Clone, Debug)]
pub struct ImageDecoderCache<F> {
    latents: Array2<F>,
    visible_positions: Vec<usize>,
    masked_positions: Vec<usize>,
    transformer: TransformerCache<F>,
    hidden: Array2<F>,
}

impl<F: Real> ImageDecoder<F> {
    pub fn new(config: &ModelConfig, rng: &mut RandomStream) -> Self {
        Self {
            embed: Linear::new(config.encoder_width, config.decoder_width, rng),
            mask_token: trunc_normal_vec(config.decoder_width, 0.02, rng),
            transformer: Transformer::new(
                config.image_decoder_depth,
                config.decoder_width,
                config.decoder_heads,
                config.mlp_ratio,
                rng,
            ),
            pred: Linear::new(config.decoder_width, config.hr_patch_dim(), rng),
            pos: sincos_2d(config.grid_side(), config.decoder_width),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.pred.output_dim()
    }

    fn sequence(&self, latents: &Array2<F>, visible: &[usize], mask: &MaskVector) -> Result<Array2<F>> {
        if mask.len() != self.pos.nrows() {
            return Err(Error::Shape(format!(
                "mask of {} patches for a decoder grid of {}",
                mask.len(),
                self.pos.nrows()
            )));
        }
        if latents.ncols() != self.embed.input_dim() {
            return Err(Error::Shape(format!(
                "encoder width {} vs decoder input {}",
                latents.ncols(),
                self.embed.input_dim()
            )));
        }
        let projected = self.embed.forward(latents);
        build_masked_sequence(&projected, visible, mask, &self.mask_token, &self.pos)
    }

    /// Returns `n × (hr·s)²·C` reconstructions, one per grid position.
    pub fn forward(
        &self,
        latents: &Array2<F>,
        visible_positions: &[usize],
        mask: &MaskVector,
    ) -> Result<(Array2<F>, ImageDecoderCache<F>)> {
        let seq = self.sequence(latents, visible_positions, mask)?;
        let (hidden, transformer) = self.transformer.forward(seq, None);
        let recon = self.pred.forward(&hidden);
        Ok((
            recon,
            ImageDecoderCache {
                latents: latents.clone(),
                visible_positions: visible_positions.to_vec(),
                masked_positions: mask.masked_positions(),
                transformer,
                hidden,
            },
        ))
    }

    pub fn infer(&self, latents: &Array2<F>, visible_positions: &[usize], mask: &MaskVector) -> Result<Array2<F>> {
        let seq = self.sequence(latents, visible_positions, mask)?;
        Ok(self.pred.forward(&self.transformer.infer(seq, None)))
    }

    /// Returns the gradient w.r.t. the encoder latents.
    pub fn backward(&self, cache: &ImageDecoderCache<F>, d_recon: &Array2<F>, grad: &mut ImageDecoder<F>) -> Array2<F> {
        let d_hidden = self.pred.backward(&cache.hidden, d_recon, &mut grad.pred);
        let d_seq = self.transformer.backward(&cache.transformer, &d_hidden, &mut grad.transformer);
        for &p in &cache.masked_positions {
            grad.mask_token += &d_seq.row(p);
        }
        let d_projected = d_seq.select(Axis(0), &cache.visible_positions);
        self.embed.backward(&cache.latents, &d_projected, &mut grad.embed)
    }
}

impl<F: Real> Params<F> for ImageDecoder<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &[F])) {
        self.embed.visit(&join(prefix, "embed"), f);
        f(&join(prefix, "mask_token"), ParamKind::Embedding, vslice(&self.mask_token));
        self.transformer.visit(&join(prefix, "transformer"), f);
        self.pred.visit(&join(prefix, "pred"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut [F])) {
        self.embed.visit_mut(&join(prefix, "embed"), f);
        f(&join(prefix, "mask_token"), ParamKind::Embedding, vslice_mut(&mut self.mask_token));
        self.transformer.visit_mut(&join(prefix, "transformer"), f);
        self.pred.visit_mut(&join(prefix, "pred"), f);
    }
}
