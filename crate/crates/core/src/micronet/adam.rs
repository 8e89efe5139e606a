use super::kernels::Real;
use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First/second moment estimates, one pair per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T = f64> {
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(n_params: usize) -> Self {
        Self { m: vec![T::ZERO; n_params], v: vec![T::ZERO; n_params], step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [T], grads: &[T], cfg: &AdamConfig) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameters", self.m.len()),
                actual: format!("{} parameters, {} gradients", params.len(), grads.len()),
            });
        }
        self.step += 1;
        let t = self.step.min(i32::MAX as u64) as i32;
        let b1 = T::from_f64(cfg.beta1);
        let b2 = T::from_f64(cfg.beta2);
        let c1 = T::ONE / (T::ONE - b1.powi(t));
        let c2 = T::ONE / (T::ONE - b2.powi(t));
        let lr = T::from_f64(cfg.learning_rate);
        let eps = T::from_f64(cfg.epsilon);
        for (((w, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (T::ONE - b1) * g;
            *v = b2 * *v + (T::ONE - b2) * g * g;
            let m_hat = *m * c1;
            let v_hat = *v * c2;
            *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}
