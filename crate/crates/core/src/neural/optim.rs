use super::params::{GradBuf, Gradients, ModelParameters};
use crate::scalar::Scalar;

/// Adam with bias correction. Moments are kept for every entry, so rows of
/// the embedding table that receive no gradient still decay.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ModelParameters<T>, lr: f64) -> Self {
        let z: Vec<Vec<T>> = params.tensors().iter().map(|t| vec![T::zero(); t.data.len()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: z.clone(),
            v: z,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn update(&mut self, params: &mut ModelParameters<T>, grads: &Gradients<T>) {
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        let lr = T::of(self.lr);
        let eps = T::of(self.eps);
        for (id, t) in params.tensors_mut().iter_mut().enumerate() {
            let cols = t.cols;
            let (m, v) = (&mut self.m[id], &mut self.v[id]);
            let mut apply = |k: usize, g: T, x: &mut T| {
                m[k] = b1 * m[k] + (T::one() - b1) * g;
                v[k] = b2 * v[k] + (T::one() - b2) * g * g;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                *x -= lr * mh / (vh.sqrt() + eps);
            };
            match grads.buf(id) {
                GradBuf::Dense(g) => {
                    for (k, x) in t.data.iter_mut().enumerate() {
                        apply(k, g[k], x);
                    }
                }
                GradBuf::Rows(rows) => {
                    for (k, x) in t.data.iter_mut().enumerate() {
                        let g = rows.get(&(k / cols)).map_or(T::zero(), |r| r[k % cols]);
                        apply(k, g, x);
                    }
                }
            }
        }
    }
}
