//! Minimal dense building blocks with explicit reverse-mode gradients.
//!
//! Every layer owns its parameters as standard-layout `ndarray` arrays and
//! exposes them through [`Params`]. Gradient buffers have the same type as
//! the layer they belong to, so a zeroed clone of a model is its gradient.

mod attention;
mod layers;
mod posembed;
mod transformer;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array1, Array2};

use crate::rng::RandomStream;

pub use attention::{AttentionCache, MultiHeadAttention};
pub use layers::{gelu, gelu_grad, LayerNorm, LayerNormCache, Linear, Mlp, MlpCache};
pub use posembed::{sincos_1d, sincos_2d};
pub use transformer::{Block, BlockCache, Transformer, TransformerCache};

/// Floating-point element type; training runs in `f32`, gradient checks in `f64`.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + 'static
{
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Role of a parameter tensor; only [`ParamKind::Weight`] is weight-decayed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Norm,
    /// Mask tokens and positional tables.
    Embedding,
}

impl ParamKind {
    pub fn decays(self) -> bool {
        self == ParamKind::Weight
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Named parameter traversal in a fixed order.
pub trait Params<F: Real> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &[F]));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut [F]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, _, s| n += s.len());
        n
    }

    fn flatten(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit("", &mut |_, _, s| out.extend_from_slice(s));
        out
    }

    /// Overwrite all parameters from a flat buffer in visit order.
    fn load_flat(&mut self, flat: &[F]) {
        let mut offset = 0;
        self.visit_mut("", &mut |_, _, s| {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        });
        assert_eq!(offset, flat.len(), "flat buffer length mismatch");
    }

    fn fill_zero(&mut self) {
        self.visit_mut("", &mut |_, _, s| s.fill(F::zero()));
    }

    /// Zeroed copy, used as a gradient accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut g = self.clone();
        g.fill_zero();
        g
    }

    fn add_assign_from(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let flat = other.flatten();
        let mut offset = 0;
        self.visit_mut("", &mut |_, _, s| {
            let n = s.len();
            for (a, b) in s.iter_mut().zip(&flat[offset..offset + n]) {
                *a += *b;
            }
            offset += n;
        });
    }

    fn scale(&mut self, k: F) {
        self.visit_mut("", &mut |_, _, s| s.iter_mut().for_each(|v| *v *= k));
    }

    fn param_names(&self) -> Vec<(String, ParamKind, usize)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, kind, s| out.push((name.to_string(), kind, s.len())));
        out
    }
}

impl<F: Real, P: Params<F>> Params<F> for Vec<P> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &[F])) {
        for (i, p) in self.iter().enumerate() {
            p.visit(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut [F])) {
        for (i, p) in self.iter_mut().enumerate() {
            p.visit_mut(&join(prefix, &i.to_string()), f);
        }
    }
}

/// Truncated normal (±2σ) initialization.
pub fn trunc_normal<F: Real>(rows: usize, cols: usize, std: f64, rng: &mut RandomStream) -> Array2<F> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let z = loop {
            let z = rng.normal();
            if z.abs() <= 2.0 {
                break z;
            }
        };
        F::c(z * std)
    })
}

/// Glorot uniform initialization for an `rows × cols` weight.
pub fn xavier_uniform<F: Real>(rows: usize, cols: usize, rng: &mut RandomStream) -> Array2<F> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || F::c(a * (2.0 * rng.uniform() - 1.0)))
}

pub fn trunc_normal_vec<F: Real>(len: usize, std: f64, rng: &mut RandomStream) -> Array1<F> {
    trunc_normal::<F>(1, len, std, rng).into_shape_with_order(len).expect("reshape")
}

pub(crate) fn slice<F>(a: &Array2<F>) -> &[F] {
    a.as_slice().expect("parameters are standard layout")
}

pub(crate) fn slice_mut<F>(a: &mut Array2<F>) -> &mut [F] {
    a.as_slice_mut().expect("parameters are standard layout")
}

pub(crate) fn vslice<F>(a: &Array1<F>) -> &[F] {
    a.as_slice().expect("parameters are standard layout")
}

pub(crate) fn vslice_mut<F>(a: &mut Array1<F>) -> &mut [F] {
    a.as_slice_mut().expect("parameters are standard layout")
}
