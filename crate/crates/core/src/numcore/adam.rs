use serde::{Deserialize, Serialize};

use super::{ParamStore, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected adaptive-moment optimizer state.
#[derive(Clone, Debug)]
pub struct Adam<S> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Option<Vec<S>>>,
    second: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable, non-frozen parameter.
    ///
    /// Fails without touching any parameter if a trainable one has no
    /// gradient.
    pub fn step(&mut self, store: &mut ParamStore<S>) -> Result<()> {
        let ids = store.trainable_ids();
        if let Some(&id) = ids.iter().find(|&&id| store.get(id).grad().is_none()) {
            return Err(Error::MissingGradient(store.name(id).to_string()));
        }
        self.first.resize(store.len(), None);
        self.second.resize(store.len(), None);
        self.step += 1;

        let c = &self.config;
        let (b1, b2) = (S::lit(c.beta1), S::lit(c.beta2));
        let one = S::one();
        let t = self.step as i32;
        let bc1 = one - b1.powi(t);
        let bc2 = one - b2.powi(t);
        let (lr, eps) = (S::lit(c.lr), S::lit(c.eps));

        for id in ids {
            let i = id.index();
            let tensor = store.get_mut(id);
            let n = tensor.numel();
            let grad = tensor.grad().expect("checked above").to_vec();
            let m = self.first[i].get_or_insert_with(|| vec![S::zero(); n]);
            let v = self.second[i].get_or_insert_with(|| vec![S::zero(); n]);
            for (k, w) in tensor.data_mut().iter_mut().enumerate() {
                let g = grad[k];
                m[k] = b1 * m[k] + (one - b1) * g;
                v[k] = b2 * v[k] + (one - b2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
