//! Class-balanced weighted L2 loss between a predicted response and the
//! probability-mask target, with its analytic gradient.
//!
//! Positive-target pixels are rare, so each side is weighted by the opposite
//! side's pixel fraction: background pixels get S_n/X_n and positive pixels
//! get B_n/X_n, which balances the two contributions exactly.

use crate::error::{Error, Result};
use crate::raster::GrayImage;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights<S> {
    /// Weight applied on zero-target pixels: S_n / X_n.
    pub w_bg: S,
    /// Weight applied on positive-target pixels: B_n / X_n.
    pub w_fg: S,
    /// Total pixel count X_n.
    pub total: usize,
    /// Positive-target pixel count S_n.
    pub positive: usize,
    /// Zero-target pixel count B_n.
    pub background: usize,
}

/// Counts positive (> 0) and zero pixels of the target and derives the
/// balance weights. Errors when either class is empty.
pub fn compute_weights<S: Scalar>(target: &GrayImage<S>) -> Result<LossWeights<S>> {
    if let Some(index) = target.as_slice().iter().position(|v| *v < S::zero()) {
        return Err(Error::NegativeInput {
            index,
            value: target.as_slice()[index].to_f64c(),
        });
    }
    let total = target.as_slice().len();
    let positive = target.as_slice().iter().filter(|&&v| v > S::zero()).count();
    let background = total - positive;
    if positive == 0 || background == 0 {
        return Err(Error::DegenerateTarget(format!(
            "positive={positive}, background={background}"
        )));
    }
    Ok(LossWeights {
        w_bg: S::from_f64c(positive as f64 / total as f64),
        w_fg: S::from_f64c(background as f64 / total as f64),
        total,
        positive,
        background,
    })
}

/// loss = sum_i w(i) (pred_i - target_i)^2, grad_i = 2 w(i) (pred_i - target_i),
/// with w(i) chosen per pixel by whether the target there is positive.
pub fn weighted_l2<S: Scalar>(
    pred: &GrayImage<S>,
    target: &GrayImage<S>,
) -> Result<(S, GrayImage<S>)> {
    if pred.dims() != target.dims() {
        return Err(Error::shape(format!(
            "pred {:?} vs target {:?}",
            pred.dims(),
            target.dims()
        )));
    }
    let weights = compute_weights(target)?;
    let mut grad = GrayImage::<S>::zeros(pred.width(), pred.height());
    let mut loss = S::zero();
    let two = S::from_f64c(2.0);
    for i in 0..pred.as_slice().len() {
        let t = target.as_slice()[i];
        let w = if t > S::zero() { weights.w_fg } else { weights.w_bg };
        let diff = pred.as_slice()[i] - t;
        loss += w * diff * diff;
        grad.as_mut_slice()[i] = two * w * diff;
    }
    Ok((loss, grad))
}
