use ndarray::{linalg::general_mat_mul, Array1, Array2, Axis};

use super::{join, slice, slice_mut, vslice, vslice_mut, xavier_uniform, ParamKind, Params, Real};
use crate::rng::RandomStream;

/// Affine map `y = x W + b` over the rows of `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<F> {
    /// `in × out`
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> Linear<F> {
    pub fn new(input: usize, output: usize, rng: &mut RandomStream) -> Self {
        Self {
            weight: xavier_uniform(input, output, rng),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: &Array2<F>) -> Array2<F> {
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        y
    }

    /// Accumulates parameter gradients into `grad`, returns `dL/dx`.
    pub fn backward(&self, x: &Array2<F>, dy: &Array2<F>, grad: &mut Linear<F>) -> Array2<F> {
        self.backward_params(x, dy, grad);
        dy.dot(&self.weight.t())
    }

    pub fn backward_params(&self, x: &Array2<F>, dy: &Array2<F>, grad: &mut Linear<F>) {
        general_mat_mul(F::one(), &x.t(), dy, F::one(), &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(0));
    }
}

impl<F: Real> Params<F> for Linear<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &[F])) {
        f(&join(prefix, "weight"), ParamKind::Weight, slice(&self.weight));
        f(&join(prefix, "bias"), ParamKind::Bias, vslice(&self.bias));
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut [F])) {
        f(&join(prefix, "weight"), ParamKind::Weight, slice_mut(&mut self.weight));
        f(&join(prefix, "bias"), ParamKind::Bias, vslice_mut(&mut self.bias));
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm<F> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
}

#[derive(Clone, Debug)]
pub struct LayerNormCache<F> {
    xhat: Array2<F>,
    inv_std: Array1<F>,
}

const LN_EPS: f64 = 1e-6;

impl<F: Real> LayerNorm<F> {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }

    pub fn forward(&self, x: &Array2<F>) -> (Array2<F>, LayerNormCache<F>) {
        let d = F::c(x.ncols() as f64);
        let eps = F::c(LN_EPS);
        let mut xhat = x.clone();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / d;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|&v| v * v).sum::<F>() / d;
            *s = F::one() / (var + eps).sqrt();
            let k = *s;
            row.mapv_inplace(|v| v * k);
        }
        let mut y = &xhat * &self.gamma;
        y += &self.beta;
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache<F>, dy: &Array2<F>, grad: &mut LayerNorm<F>) -> Array2<F> {
        grad.gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
        grad.beta += &dy.sum_axis(Axis(0));
        let d = F::c(dy.ncols() as f64);
        let mut dx = dy * &self.gamma;
        for ((mut row, xh), &s) in dx
            .rows_mut()
            .into_iter()
            .zip(cache.xhat.rows())
            .zip(cache.inv_std.iter())
        {
            let sum_g = row.sum();
            let sum_gx = row.iter().zip(xh.iter()).map(|(&g, &x)| g * x).sum::<F>();
            for (g, &x) in row.iter_mut().zip(xh.iter()) {
                *g = s * (*g - sum_g / d - x * sum_gx / d);
            }
        }
        dx
    }
}

impl<F: Real> Params<F> for LayerNorm<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &[F])) {
        f(&join(prefix, "gamma"), ParamKind::Norm, vslice(&self.gamma));
        f(&join(prefix, "beta"), ParamKind::Norm, vslice(&self.beta));
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut [F])) {
        f(&join(prefix, "gamma"), ParamKind::Norm, vslice_mut(&mut self.gamma));
        f(&join(prefix, "beta"), ParamKind::Norm, vslice_mut(&mut self.beta));
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

/// Tanh-approximated GELU.
pub fn gelu<F: Real>(x: F) -> F {
    let k = F::c(GELU_K);
    let c = F::c(GELU_C);
    let half = F::c(0.5);
    half * x * (F::one() + (k * (x + c * x * x * x)).tanh())
}

pub fn gelu_grad<F: Real>(x: F) -> F {
    let k = F::c(GELU_K);
    let c = F::c(GELU_C);
    let half = F::c(0.5);
    let t = (k * (x + c * x * x * x)).tanh();
    half * (F::one() + t) + half * x * (F::one() - t * t) * k * (F::one() + F::c(3.0) * c * x * x)
}

/// Two-layer feed-forward network with GELU.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<F> {
    pub fc1: Linear<F>,
    pub fc2: Linear<F>,
}

#[derive(Clone, Debug)]
pub struct MlpCache<F> {
    x: Array2<F>,
    pre: Array2<F>,
    act: Array2<F>,
}

impl<F: Real> Mlp<F> {
    pub fn new(dim: usize, hidden: usize, rng: &mut RandomStream) -> Self {
        Self {
            fc1: Linear::new(dim, hidden, rng),
            fc2: Linear::new(hidden, dim, rng),
        }
    }

    pub fn forward(&self, x: &Array2<F>) -> (Array2<F>, MlpCache<F>) {
        let pre = self.fc1.forward(x);
        let act = pre.mapv(gelu);
        let y = self.fc2.forward(&act);
        (
            y,
            MlpCache {
                x: x.clone(),
                pre,
                act,
            },
        )
    }

    pub fn backward(&self, cache: &MlpCache<F>, dy: &Array2<F>, grad: &mut Mlp<F>) -> Array2<F> {
        let mut dact = self.fc2.backward(&cache.act, dy, &mut grad.fc2);
        dact.zip_mut_with(&cache.pre, |g, &p| *g *= gelu_grad(p));
        self.fc1.backward(&cache.x, &dact, &mut grad.fc1)
    }
}

impl<F: Real> Params<F> for Mlp<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &[F])) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut [F])) {
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
        self.fc2.visit_mut(&join(prefix, "fc2"), f);
    }
}
