use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L2 coefficient λ; `λ·param` is added to the gradient before the
    /// moment updates.
    pub l2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2: 0.0,
        }
    }
}

/// Adam moments for an ordered list of parameter slots.
#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar = f64> {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<(Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update over every `(param, grad)` slot. Slots
    /// must be presented in the same order and shapes on every call.
    pub fn step<'a, I>(&mut self, slots: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a mut Tensor<T>, &'a Tensor<T>)>,
    {
        let c = self.config;
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let corr1 = T::one() - b1.powi(t);
        let corr2 = T::one() - b2.powi(t);
        let (lr, eps, l2) = (T::of(c.learning_rate), T::of(c.epsilon), T::of(c.l2));
        for (k, (param, grad)) in slots.into_iter().enumerate() {
            if param.shape() != grad.shape() {
                return Err(shape_err!("slot {k}: param {:?} vs grad {:?}", param.shape(), grad.shape()));
            }
            if k == self.moments.len() {
                self.moments.push((param.zeros_like(), param.zeros_like()));
            }
            let (m, v) = &mut self.moments[k];
            if m.shape() != param.shape() {
                return Err(shape_err!("slot {k}: moments {:?} vs param {:?}", m.shape(), param.shape()));
            }
            let iter = param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
            for ((p, &g), (mi, vi)) in iter {
                let g = g + l2 * *p;
                *mi = b1 * *mi + (T::one() - b1) * g;
                *vi = b2 * *vi + (T::one() - b2) * g * g;
                let mhat = *mi / corr1;
                let vhat = *vi / corr2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
