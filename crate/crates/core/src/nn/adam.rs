use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shapes: &[&[T]]) -> Self {
        AdamState {
            step: 0,
            m: shapes.iter().map(|s| vec![T::zero(); s.len()]).collect(),
            v: shapes.iter().map(|s| vec![T::zero(); s.len()]).collect(),
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut [T]],
    grads: &[&[T]],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(alloc::format!(
            "adam: {} parameter tensors, {} gradients, {} states",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let (ob1, ob2) = (T::of(1.0 - cfg.beta1), T::of(1.0 - cfg.beta2));
    let step = T::of(cfg.lr / bc1);
    let inv_bc2 = T::of(1.0 / bc2);
    let eps = T::of(cfg.eps);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::Shape("adam: tensor length mismatch".into()));
        }
        for i in 0..p.len() {
            m[i] = b1 * m[i] + ob1 * g[i];
            v[i] = b2 * v[i] + ob2 * g[i] * g[i];
            p[i] -= step * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
        }
    }
    Ok(())
}
