//! Adam with bias-corrected moments and classical L2 weight decay folded
//! into the gradient (g <- g + wd * theta).

use std::collections::BTreeMap;

use super::Network;
use crate::scalar::Scalar;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Default)]
pub struct AdamState<S> {
    /// Shared step counter (1-based after the first update).
    pub step: u64,
    slots: BTreeMap<String, (Vec<S>, Vec<S>)>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new() -> Self {
        AdamState {
            step: 0,
            slots: BTreeMap::new(),
        }
    }
}

/// One Adam update on a raw parameter slice. `step` is the 1-based step
/// count used for bias correction.
#[allow(clippy::too_many_arguments)]
pub fn adam_update<S: Scalar>(
    theta: &mut [S],
    grad: &[S],
    m: &mut [S],
    v: &mut [S],
    step: u64,
    lr: f64,
    weight_decay: f64,
) {
    let b1 = S::from_f64c(BETA1);
    let b2 = S::from_f64c(BETA2);
    let one = S::one();
    let eps = S::from_f64c(EPSILON);
    let lr = S::from_f64c(lr);
    let wd = S::from_f64c(weight_decay);
    let bc1 = S::from_f64c(1.0 - BETA1.powi(step as i32));
    let bc2 = S::from_f64c(1.0 - BETA2.powi(step as i32));
    for i in 0..theta.len() {
        let g = grad[i] + wd * theta[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        theta[i] = theta[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Applies one Adam step to every network parameter from its accumulated
/// gradient, visiting parameters in name-sorted order.
pub fn adam_step<S: Scalar>(
    net: &mut Network<S>,
    state: &mut AdamState<S>,
    lr: f64,
    weight_decay: f64,
) {
    state.step += 1;
    let step = state.step;
    for (name, tensor) in net.params_mut() {
        let n = tensor.len();
        let (m, v) = state
            .slots
            .entry(name)
            .or_insert_with(|| (vec![S::zero(); n], vec![S::zero(); n]));
        let (grad, data) = tensor.grad_and_data_mut();
        adam_update(data, grad, m, v, step, lr, weight_decay);
    }
}
