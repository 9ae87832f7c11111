use ndarray::{s, Array1, Array2, Axis};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::{
    join, slice, slice_mut, trunc_normal, Linear, ParamKind, Params, Real, Transformer, TransformerCache,
};
use crate::rng::RandomStream;
use crate::text::TokenRecord;

/// Bidirectional text decoder conditioned on the pooled image latent, which
/// enters as a single prefix token ahead of the `L` text positions.
#[derive(Clone, Debug, PartialEq)]
pub struct TextDecoder<F> {
    pub cond: Linear<F>,
    /// `vocab × width`
    pub token_embed: Array2<F>,
    /// `L × width`, learned.
    pub pos_embed: Array2<F>,
    pub transformer: Transformer<F>,
    pub head: Linear<F>,
}

#[derive(Clone, Debug)]
pub struct TextDecoderCache<F> {
    pooled: Array2<F>,
    ids: Vec<u32>,
    transformer: TransformerCache<F>,
    hidden: Array2<F>,
}

impl<F: Real> TextDecoder<F> {
    pub fn new(config: &ModelConfig, rng: &mut RandomStream) -> Self {
        let w = config.decoder_width;
        Self {
            cond: Linear::new(config.encoder_width, w, rng),
            token_embed: trunc_normal(config.vocab_size, w, 0.02, rng),
            pos_embed: trunc_normal(config.max_text_len, w, 0.02, rng),
            transformer: Transformer::new(config.text_decoder_depth, w, config.decoder_heads, config.mlp_ratio, rng),
            head: Linear::new(w, config.vocab_size, rng),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.token_embed.nrows()
    }

    fn sequence(&self, record: &TokenRecord, pooled: &Array1<F>) -> Result<(Array2<F>, Array2<F>, Vec<bool>)> {
        if pooled.len() != self.cond.input_dim() {
            return Err(Error::Shape(format!(
                "pooled latent width {} vs conditioning input {}",
                pooled.len(),
                self.cond.input_dim()
            )));
        }
        if record.len() != self.pos_embed.nrows() {
            return Err(Error::Shape(format!(
                "text record of length {} for max_text_len {}",
                record.len(),
                self.pos_embed.nrows()
            )));
        }
        if let Some(&bad) = record.ids.iter().find(|&&id| id as usize >= self.vocab_size()) {
            return Err(Error::Shape(format!("token id {bad} outside vocabulary")));
        }
        let pooled = pooled.clone().insert_axis(Axis(0));
        let w = self.cond.output_dim();
        let mut seq = Array2::zeros((record.len() + 1, w));
        seq.row_mut(0).assign(&self.cond.forward(&pooled).row(0));
        for (i, &id) in record.ids.iter().enumerate() {
            let mut row = seq.row_mut(i + 1);
            row.assign(&self.token_embed.row(id as usize));
            row += &self.pos_embed.row(i);
        }
        let mut valid = Vec::with_capacity(record.len() + 1);
        valid.push(true);
        valid.extend(record.key_valid());
        Ok((seq, pooled, valid))
    }

    /// Logits for the `L` text positions (the prefix row is dropped).
    pub fn forward(&self, record: &TokenRecord, pooled: &Array1<F>) -> Result<(Array2<F>, TextDecoderCache<F>)> {
        let (seq, pooled, valid) = self.sequence(record, pooled)?;
        let (out, transformer) = self.transformer.forward(seq, Some(&valid));
        let hidden = out.slice(s![1.., ..]).to_owned();
        let logits = self.head.forward(&hidden);
        Ok((
            logits,
            TextDecoderCache {
                pooled,
                ids: record.ids.clone(),
                transformer,
                hidden,
            },
        ))
    }

    pub fn infer(&self, record: &TokenRecord, pooled: &Array1<F>) -> Result<Array2<F>> {
        let (seq, _, valid) = self.sequence(record, pooled)?;
        let out = self.transformer.infer(seq, Some(&valid));
        Ok(self.head.forward(&out.slice(s![1.., ..]).to_owned()))
    }

    /// Returns the gradient w.r.t. the pooled image latent.
    pub fn backward(&self, cache: &TextDecoderCache<F>, d_logits: &Array2<F>, grad: &mut TextDecoder<F>) -> Array1<F> {
        let d_hidden = self.head.backward(&cache.hidden, d_logits, &mut grad.head);
        let mut d_out = Array2::zeros((d_hidden.nrows() + 1, d_hidden.ncols()));
        d_out.slice_mut(s![1.., ..]).assign(&d_hidden);
        let d_seq = self.transformer.backward(&cache.transformer, &d_out, &mut grad.transformer);
        for (i, &id) in cache.ids.iter().enumerate() {
            let g = d_seq.row(i + 1);
            let mut te = grad.token_embed.row_mut(id as usize);
            te += &g;
            let mut pe = grad.pos_embed.row_mut(i);
            pe += &g;
        }
        let d_prefix = d_seq.slice(s![0..1, ..]).to_owned();
        self.cond.backward(&cache.pooled, &d_prefix, &mut grad.cond).row(0).to_owned()
    }
}

impl<F: Real> Params<F> for TextDecoder<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &[F])) {
        self.cond.visit(&join(prefix, "cond"), f);
        f(&join(prefix, "token_embed"), ParamKind::Weight, slice(&self.token_embed));
        f(&join(prefix, "pos_embed"), ParamKind::Embedding, slice(&self.pos_embed));
        self.transformer.visit(&join(prefix, "transformer"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut [F])) {
        self.cond.visit_mut(&join(prefix, "cond"), f);
        f(&join(prefix, "token_embed"), ParamKind::Weight, slice_mut(&mut self.token_embed));
        f(&join(prefix, "pos_embed"), ParamKind::Embedding, slice_mut(&mut self.pos_embed));
        self.transformer.visit_mut(&join(prefix, "transformer"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}
