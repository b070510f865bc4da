use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Gradients, ParamId, ParamStore, Scalar, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    config: AdamConfig,
    step: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable entry of `store`. `bound` maps
    /// parameter indices to the tape variables the gradients refer to.
    ///
    /// A non-finite gradient aborts without touching any weight.
    pub fn step(
        &mut self,
        store: &mut ParamStore<S>,
        bound: &[Var],
        grads: &Gradients<S>,
    ) -> Result<()> {
        if bound.len() != store.len() {
            return Err(Error::Usage(format!(
                "{} bound variables for {} parameters",
                bound.len(),
                store.len()
            )));
        }
        for (entry, &var) in store.entries().iter().zip(bound) {
            if !entry.trainable {
                continue;
            }
            if let Some(g) = grads.get(var) {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::TrainingAborted(format!(
                        "non-finite gradient for {}",
                        entry.name
                    )));
                }
            }
        }
        if self.m.len() != store.len() {
            self.m = store.entries().iter().map(|e| vec![S::zero(); e.tensor.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - libm::pow(c.beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, self.step as f64);
        let (b1, b2) = (S::lit(c.beta1), S::lit(c.beta2));
        let (ob1, ob2) = (S::lit(1.0 - c.beta1), S::lit(1.0 - c.beta2));
        let (inv_bc1, inv_bc2) = (S::lit(1.0 / bc1), S::lit(1.0 / bc2));
        let lr = S::lit(c.learning_rate);
        let eps = S::lit(c.epsilon);
        for i in 0..store.len() {
            if !store.entries()[i].trainable {
                continue;
            }
            let Some(g) = grads.get(bound[i]) else { continue };
            let w = store.get_mut(ParamId::from_index(i)).data_mut();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..w.len() {
                m[j] = b1 * m[j] + ob1 * g[j];
                v[j] = b2 * v[j] + ob2 * g[j] * g[j];
                let mh = m[j] * inv_bc1;
                let vh = v[j] * inv_bc2;
                w[j] = w[j] - lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}
