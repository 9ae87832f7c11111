use ndarray::{s, Array2};

use super::{join, Linear, ParamKind, Params, Real};
use crate::rng::RandomStream;

/// Bidirectional multi-head self-attention with an optional key mask.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiHeadAttention<F> {
    pub qkv: Linear<F>,
    pub proj: Linear<F>,
    pub heads: usize,
}

#[derive(Clone, Debug)]
pub struct AttentionCache<F> {
    x: Array2<F>,
    qkv: Array2<F>,
    probs: Vec<Array2<F>>,
    context: Array2<F>,
}

impl<F: Real> MultiHeadAttention<F> {
    pub fn new(dim: usize, heads: usize, rng: &mut RandomStream) -> Self {
        assert_eq!(dim % heads, 0, "width must divide into heads");
        Self {
            qkv: Linear::new(dim, 3 * dim, rng),
            proj: Linear::new(dim, dim, rng),
            heads,
        }
    }

    fn dim(&self) -> usize {
        self.proj.input_dim()
    }

    /// `key_valid[j] == false` removes key `j` from every query's softmax.
    pub fn forward(&self, x: &Array2<F>, key_valid: Option<&[bool]>) -> (Array2<F>, AttentionCache<F>) {
        let d = self.dim();
        let dh = d / self.heads;
        let t = x.nrows();
        let scale = F::c(1.0 / (dh as f64).sqrt());
        let qkv = self.qkv.forward(x);
        let mut context = Array2::zeros((t, d));
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let q = qkv.slice(s![.., h * dh..(h + 1) * dh]);
            let k = qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
            let v = qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
            let mut p = q.dot(&k.t());
            for mut row in p.rows_mut() {
                let mut max = F::neg_infinity();
                for (j, s) in row.iter_mut().enumerate() {
                    if key_valid.is_some_and(|m| !m[j]) {
                        *s = F::neg_infinity();
                    } else {
                        *s *= scale;
                        max = max.max(*s);
                    }
                }
                let mut total = F::zero();
                for s in row.iter_mut() {
                    *s = if *s == F::neg_infinity() { F::zero() } else { (*s - max).exp() };
                    total += *s;
                }
                row.mapv_inplace(|s| s / total);
            }
            context.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&p.dot(&v));
            probs.push(p);
        }
        let y = self.proj.forward(&context);
        (
            y,
            AttentionCache {
                x: x.clone(),
                qkv,
                probs,
                context,
            },
        )
    }

    pub fn backward(
        &self,
        cache: &AttentionCache<F>,
        dy: &Array2<F>,
        grad: &mut MultiHeadAttention<F>,
    ) -> Array2<F> {
        let d = self.dim();
        let dh = d / self.heads;
        let scale = F::c(1.0 / (dh as f64).sqrt());
        let dcontext = self.proj.backward(&cache.context, dy, &mut grad.proj);
        let mut dqkv = Array2::zeros(cache.qkv.raw_dim());
        for h in 0..self.heads {
            let cols = |base: usize| base + h * dh..base + (h + 1) * dh;
            let q = cache.qkv.slice(s![.., cols(0)]);
            let k = cache.qkv.slice(s![.., cols(d)]);
            let v = cache.qkv.slice(s![.., cols(2 * d)]);
            let p = &cache.probs[h];
            let dctx = dcontext.slice(s![.., cols(0)]);
            // dV = Pᵀ dO, dP = dO Vᵀ
            dqkv.slice_mut(s![.., cols(2 * d)]).assign(&p.t().dot(&dctx));
            let mut ds = dctx.dot(&v.t());
            for (mut row, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                let dot: F = row.iter().zip(prow.iter()).map(|(&g, &pp)| g * pp).sum();
                for (g, &pp) in row.iter_mut().zip(prow.iter()) {
                    *g = pp * (*g - dot) * scale;
                }
            }
            dqkv.slice_mut(s![.., cols(0)]).assign(&ds.dot(&k));
            dqkv.slice_mut(s![.., cols(d)]).assign(&ds.t().dot(&q));
        }
        self.qkv.backward(&cache.x, &dqkv, &mut grad.qkv)
    }
}

impl<F: Real> Params<F> for MultiHeadAttention<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &[F])) {
        self.qkv.visit(&join(prefix, "qkv"), f);
        self.proj.visit(&join(prefix, "proj"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut [F])) {
        self.qkv.visit_mut(&join(prefix, "qkv"), f);
        self.proj.visit_mut(&join(prefix, "proj"), f);
    }
}
