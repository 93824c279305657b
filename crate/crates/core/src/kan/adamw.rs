//! Adam with decoupled weight decay.

use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, weight_decay: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment accumulators and the step counter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamWState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Scalar> AdamWState<T> {
    pub fn new(len: usize) -> Self {
        Self { m: vec![T::zero(); len], v: vec![T::zero(); len], step: 0 }
    }
}

/// One update. Decay is applied to the parameter first
/// (`p -= lr * wd * p`), then the bias-corrected Adam delta.
pub fn adamw_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamWState<T>,
    config: &AdamWConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Shape(format!(
            "adamw: params {}, grads {}, m {}, v {}",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    state.step += 1;
    let lr = T::lit(config.learning_rate);
    let decay = T::lit(config.learning_rate * config.weight_decay);
    let b1 = T::lit(config.beta1);
    let b2 = T::lit(config.beta2);
    let eps = T::lit(config.eps);
    let t = i32::try_from(state.step).unwrap_or(i32::MAX);
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(state.m.iter_mut()).zip(state.v.iter_mut()) {
        *p = *p - decay * *p;
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
