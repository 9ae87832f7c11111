use ndarray::Array2;

use super::{join, AttentionCache, LayerNorm, LayerNormCache, Mlp, MlpCache, MultiHeadAttention, ParamKind, Params, Real};
use crate::rng::RandomStream;

/// Pre-norm transformer block.
#[derive(Clone, Debug, PartialEq)]
pub struct Block<F> {
    pub norm1: LayerNorm<F>,
    pub attn: MultiHeadAttention<F>,
    pub norm2: LayerNorm<F>,
    pub mlp: Mlp<F>,
}

#[derive(Clone, Debug)]
pub struct BlockCache<F> {
    norm1: LayerNormCache<F>,
    attn: AttentionCache<F>,
    norm2: LayerNormCache<F>,
    mlp: MlpCache<F>,
}

impl<F: Real> Block<F> {
    pub fn new(dim: usize, heads: usize, mlp_ratio: usize, rng: &mut RandomStream) -> Self {
        Self {
            norm1: LayerNorm::new(dim),
            attn: MultiHeadAttention::new(dim, heads, rng),
            norm2: LayerNorm::new(dim),
            mlp: Mlp::new(dim, dim * mlp_ratio, rng),
        }
    }

    pub fn forward(&self, x: &Array2<F>, key_valid: Option<&[bool]>) -> (Array2<F>, BlockCache<F>) {
        let (h, norm1) = self.norm1.forward(x);
        let (a, attn) = self.attn.forward(&h, key_valid);
        let x1 = x + &a;
        let (h2, norm2) = self.norm2.forward(&x1);
        let (m, mlp) = self.mlp.forward(&h2);
        (
            x1 + &m,
            BlockCache {
                norm1,
                attn,
                norm2,
                mlp,
            },
        )
    }

    pub fn backward(&self, cache: &BlockCache<F>, dy: &Array2<F>, grad: &mut Block<F>) -> Array2<F> {
        let dh2 = self.mlp.backward(&cache.mlp, dy, &mut grad.mlp);
        let dx1 = dy + &self.norm2.backward(&cache.norm2, &dh2, &mut grad.norm2);
        let dh = self.attn.backward(&cache.attn, &dx1, &mut grad.attn);
        dx1 + &self.norm1.backward(&cache.norm1, &dh, &mut grad.norm1)
    }
}

impl<F: Real> Params<F> for Block<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &[F])) {
        self.norm1.visit(&join(prefix, "norm1"), f);
        self.attn.visit(&join(prefix, "attn"), f);
        self.norm2.visit(&join(prefix, "norm2"), f);
        self.mlp.visit(&join(prefix, "mlp"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut [F])) {
        self.norm1.visit_mut(&join(prefix, "norm1"), f);
        self.attn.visit_mut(&join(prefix, "attn"), f);
        self.norm2.visit_mut(&join(prefix, "norm2"), f);
        self.mlp.visit_mut(&join(prefix, "mlp"), f);
    }
}

/// A stack of blocks followed by a final layer norm.
#[derive(Clone, Debug, PartialEq)]
pub struct Transformer<F> {
    pub blocks: Vec<Block<F>>,
    pub norm: LayerNorm<F>,
}

#[derive(Clone, Debug)]
pub struct TransformerCache<F> {
    blocks: Vec<BlockCache<F>>,
    norm: LayerNormCache<F>,
}

impl<F: Real> Transformer<F> {
    pub fn new(depth: usize, dim: usize, heads: usize, mlp_ratio: usize, rng: &mut RandomStream) -> Self {
        Self {
            blocks: (0..depth).map(|_| Block::new(dim, heads, mlp_ratio, rng)).collect(),
            norm: LayerNorm::new(dim),
        }
    }

    pub fn forward(&self, x: Array2<F>, key_valid: Option<&[bool]>) -> (Array2<F>, TransformerCache<F>) {
        let mut h = x;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (next, cache) = block.forward(&h, key_valid);
            caches.push(cache);
            h = next;
        }
        let (y, norm) = self.norm.forward(&h);
        (y, TransformerCache { blocks: caches, norm })
    }

    /// Forward pass without keeping activations.
    pub fn infer(&self, x: Array2<F>, key_valid: Option<&[bool]>) -> Array2<F> {
        let mut h = x;
        for block in &self.blocks {
            h = block.forward(&h, key_valid).0;
        }
        self.norm.forward(&h).0
    }

    pub fn backward(&self, cache: &TransformerCache<F>, dy: &Array2<F>, grad: &mut Transformer<F>) -> Array2<F> {
        let mut dh = self.norm.backward(&cache.norm, dy, &mut grad.norm);
        for ((block, bc), g) in self
            .blocks
            .iter()
            .zip(&cache.blocks)
            .zip(grad.blocks.iter_mut())
            .rev()
        {
            dh = block.backward(bc, &dh, g);
        }
        dh
    }
}

impl<F: Real> Params<F> for Transformer<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &[F])) {
        self.blocks.visit(&join(prefix, "blocks"), f);
        self.norm.visit(&join(prefix, "norm"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut [F])) {
        self.blocks.visit_mut(&join(prefix, "blocks"), f);
        self.norm.visit_mut(&join(prefix, "norm"), f);
    }
}
