use ndarray::{Array1, Array2, Axis};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::{join, sincos_2d, Linear, ParamKind, Params, Real, Transformer, TransformerCache};
use crate::rng::RandomStream;

/// Fixed pixel standardization applied before the patch embedding.
pub const PIXEL_MEAN: f64 = 0.5;
pub const PIXEL_STD: f64 = 0.25;

/// Modality-agnostic patch encoder. There is no modality input: every image
/// goes through the same patch embedding and the same blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<F> {
    pub patch_embed: Linear<F>,
    pub transformer: Transformer<F>,
    /// Fixed 2-D sin-cos table, `n × d`; not trained.
    pos: Array2<F>,
}

/// Latents of the encoded (visible) patches and their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput<F> {
    /// `|visible| × d`
    pub patch_latents: Array2<F>,
    pub pooled: Array1<F>,
    pub visible_positions: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct EncoderCache<F> {
    patches: Array2<F>,
    transformer: TransformerCache<F>,
}

impl<F: Real> Encoder<F> {
    pub fn new(config: &ModelConfig, rng: &mut RandomStream) -> Self {
        Self {
            patch_embed: Linear::new(config.patch_dim(), config.encoder_width, rng),
            transformer: Transformer::new(
                config.encoder_depth,
                config.encoder_width,
                config.encoder_heads,
                config.mlp_ratio,
                rng,
            ),
            pos: sincos_2d(config.grid_side(), config.encoder_width),
        }
    }

    pub fn width(&self) -> usize {
        self.patch_embed.output_dim()
    }

    fn embed(&self, patches: &Array2<F>, positions: &[usize]) -> Result<Array2<F>> {
        if patches.nrows() == 0 {
            return Err(Error::FullyMasked);
        }
        if patches.nrows() != positions.len() {
            return Err(Error::Shape(format!(
                "{} patches with {} positions",
                patches.nrows(),
                positions.len()
            )));
        }
        if patches.ncols() != self.patch_embed.input_dim() {
            return Err(Error::Shape(format!(
                "patch length {} vs expected {}",
                patches.ncols(),
                self.patch_embed.input_dim()
            )));
        }
        if let Some(&p) = positions.iter().find(|&&p| p >= self.pos.nrows()) {
            return Err(Error::Shape(format!("patch position {p} outside the grid")));
        }
        let mut x = self.patch_embed.forward(&standardize(patches));
        x += &self.pos.select(Axis(0), positions);
        Ok(x)
    }

    fn output(latents: Array2<F>, positions: &[usize]) -> EncoderOutput<F> {
        let pooled = latents.mean_axis(Axis(0)).expect("non-empty");
        EncoderOutput {
            patch_latents: latents,
            pooled,
            visible_positions: positions.to_vec(),
        }
    }

    /// Encode visible patches placed at their original grid positions.
    pub fn forward(&self, patches: &Array2<F>, positions: &[usize]) -> Result<(EncoderOutput<F>, EncoderCache<F>)> {
        let x = self.embed(patches, positions)?;
        let (latents, transformer) = self.transformer.forward(x, None);
        Ok((
            Self::output(latents, positions),
            EncoderCache {
                patches: standardize(patches),
                transformer,
            },
        ))
    }

    pub fn infer(&self, patches: &Array2<F>, positions: &[usize]) -> Result<EncoderOutput<F>> {
        let x = self.embed(patches, positions)?;
        Ok(Self::output(self.transformer.infer(x, None), positions))
    }

    /// `d_latents` must already include the pooled-vector contribution.
    pub fn backward(&self, cache: &EncoderCache<F>, d_latents: &Array2<F>, grad: &mut Encoder<F>) {
        let dx = self.transformer.backward(&cache.transformer, d_latents, &mut grad.transformer);
        self.patch_embed.backward_params(&cache.patches, &dx, &mut grad.patch_embed);
    }
}

impl<F: Real> Params<F> for Encoder<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &[F])) {
        self.patch_embed.visit(&join(prefix, "patch_embed"), f);
        self.transformer.visit(&join(prefix, "transformer"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut [F])) {
        self.patch_embed.visit_mut(&join(prefix, "patch_embed"), f);
        self.transformer.visit_mut(&join(prefix, "transformer"), f);
    }
}

fn standardize<F: Real>(patches: &Array2<F>) -> Array2<F> {
    let (mean, inv_std) = (F::c(PIXEL_MEAN), F::c(1.0 / PIXEL_STD));
    patches.mapv(|v| (v - mean) * inv_std)
}

/// Spread the gradient of the mean-pooled vector back over the rows.
pub(crate) fn add_pooled_grad<F: Real>(d_latents: &mut Array2<F>, d_pooled: &Array1<F>) {
    let share = d_pooled / F::c(d_latents.nrows() as f64);
    for mut row in d_latents.rows_mut() {
        row += &share;
    }
}
