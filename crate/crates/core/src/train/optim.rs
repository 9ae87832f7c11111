use crate::config::TrainConfig;
use crate::nn::{Params, Real};

/// Adaptive moment estimation with decoupled weight decay.
///
/// Decay applies only to [`crate::nn::ParamKind::Weight`] tensors. Tensors
/// rejected by the trainable predicate are left untouched, moments included.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    pub fn new(beta1: f64, beta2: f64, weight_decay: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps: 1e-8,
            weight_decay,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn from_train(cfg: &TrainConfig) -> Self {
        Self::new(cfg.beta1, cfg.beta2, cfg.weight_decay)
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    pub fn step<F: Real, P: Params<F>>(
        &mut self,
        params: &mut P,
        grads: &P,
        lr: f64,
        trainable: &dyn Fn(&str) -> bool,
    ) {
        let g = grads.flatten();
        if self.m.len() != g.len() {
            self.m = vec![0.0; g.len()];
            self.v = vec![0.0; g.len()];
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let (m, v, eps, wd) = (&mut self.m, &mut self.v, self.eps, self.weight_decay);
        let mut offset = 0;
        params.visit_mut("", &mut |name, kind, values| {
            let range = offset..offset + values.len();
            offset += values.len();
            if !trainable(name) {
                return;
            }
            let decay = if kind.decays() { lr * wd } else { 0.0 };
            for (i, p) in range.zip(values.iter_mut()) {
                let gi = g[i].as_f64();
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let update = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                let pv = p.as_f64();
                *p = F::c(pv - decay * pv - update);
            }
        });
    }
}
