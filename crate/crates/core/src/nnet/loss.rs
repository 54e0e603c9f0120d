//! Squared-error losses.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tensor::Tensor;

/// Mean squared error over all elements plus its gradient `2(pred-target)/N`.
pub fn mse_loss<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<(S, Tensor<S>)> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            layer: usize::MAX,
            expected: target.shape().to_vec(),
            actual: pred.shape().to_vec(),
        });
    }
    let n = S::from_usize(pred.len()).unwrap();
    let two = S::from_f64_lossy(2.0);
    let mut loss = S::zero();
    let mut grad = Tensor::zeros(pred.shape());
    for ((g, &p), &t) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data().iter())
        .zip(target.data().iter())
    {
        let d = p - t;
        loss = loss + d * d;
        *g = two * d / n;
    }
    Ok((loss / n, grad))
}

/// Weighted squared error: `sum_i w_i (p_i - t_i)^2 / N` with gradient
/// `2 w (p - t) / N`. Uniform weights of 1 reduce to `mse_loss`.
pub fn weighted_sse_loss<S: Scalar>(
    pred: &Tensor<S>,
    target: &Tensor<S>,
    weights: &Tensor<S>,
) -> Result<(S, Tensor<S>)> {
    if pred.shape() != target.shape() || pred.shape() != weights.shape() {
        return Err(Error::ShapeMismatch {
            layer: usize::MAX,
            expected: target.shape().to_vec(),
            actual: pred.shape().to_vec(),
        });
    }
    let n = S::from_usize(pred.len()).unwrap();
    let two = S::from_f64_lossy(2.0);
    let mut loss = S::zero();
    let mut grad = Tensor::zeros(pred.shape());
    for (i, g) in grad.data_mut().iter_mut().enumerate() {
        let d = pred.data()[i] - target.data()[i];
        let w = weights.data()[i];
        loss = loss + w * d * d;
        *g = two * w * d / n;
    }
    Ok((loss / n, grad))
}
