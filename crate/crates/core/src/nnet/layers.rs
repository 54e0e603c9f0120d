//! Layer definitions and their forward/backward kernels.
//!
//! Conventions: activations are `[channels, height, width]` (or `[n]` after
//! a flatten), convolutions are stride 1 with zero "same" padding, pooling
//! is 2x2 stride 2 with floor semantics for odd inputs.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    MaxPool2,
    Relu,
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl LayerSpec {
    /// Output shape for a given input shape, or a shape error.
    pub fn output_shape(&self, layer_index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: Vec<usize>| Error::ShapeMismatch {
            layer: layer_index,
            expected,
            actual: input.to_vec(),
        };
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
            } => {
                if input.len() != 3 || input[0] != in_channels {
                    return Err(mismatch(vec![in_channels, 0, 0]));
                }
                if kernel % 2 == 0 {
                    return Err(Error::InvalidConfig(format!(
                        "conv kernel must be odd for same padding, got {kernel}"
                    )));
                }
                Ok(vec![out_channels, input[1], input[2]])
            }
            LayerSpec::MaxPool2 => {
                if input.len() != 3 || input[1] < 2 || input[2] < 2 {
                    return Err(mismatch(vec![input.first().copied().unwrap_or(0), 2, 2]));
                }
                Ok(vec![input[0], input[1] / 2, input[2] / 2])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { inputs, outputs } => {
                if input.len() != 1 || input[0] != inputs {
                    return Err(mismatch(vec![inputs]));
                }
                Ok(vec![outputs])
            }
        }
    }

    /// Parameter tensor shapes: `[weight, bias]`, or empty.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
            } => vec![
                vec![out_channels, in_channels, kernel, kernel],
                vec![out_channels],
            ],
            LayerSpec::Dense { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }

    /// Fan-in used by Kaiming initialization.
    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel * kernel,
            LayerSpec::Dense { inputs, .. } => inputs,
            _ => 0,
        }
    }
}

/// Per-layer state captured by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub enum LayerCache<S: Scalar> {
    /// The layer's input activation.
    Input(Tensor<S>),
    /// Input plus the flat argmax index of each pool window.
    Pool(Tensor<S>, Vec<u32>),
}

// ---------------------------------------------------------------------------
// matmul kernels (row-major)
// ---------------------------------------------------------------------------

/// `c[m,n] += a[m,k] * b[k,n]`
fn matmul_acc<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (kk, &av) in a_row.iter().enumerate() {
            let b_row = &b[kk * n..(kk + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row.iter()) {
                *cv = *cv + av * bv;
            }
        }
    }
}

/// `c[m,n] += a[m,t] * b[n,t]^T` (dot products of rows).
fn matmul_abt_acc<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, t: usize, n: usize) {
    debug_assert_eq!(a.len(), m * t);
    debug_assert_eq!(b.len(), n * t);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * t..(i + 1) * t];
        for j in 0..n {
            let b_row = &b[j * t..(j + 1) * t];
            let mut acc = S::zero();
            for (&av, &bv) in a_row.iter().zip(b_row.iter()) {
                acc = acc + av * bv;
            }
            c[i * n + j] = c[i * n + j] + acc;
        }
    }
}

/// `c[k,n] += a[m,k]^T * b[m,n]`
fn matmul_atb_acc<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for mm in 0..m {
        let a_row = &a[mm * k..(mm + 1) * k];
        let b_row = &b[mm * n..(mm + 1) * n];
        for (kk, &av) in a_row.iter().enumerate() {
            let c_row = &mut c[kk * n..(kk + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row.iter()) {
                *cv = *cv + av * bv;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// conv2d via im2col
// ---------------------------------------------------------------------------

/// Unfold `[c,h,w]` into `[c*k*k, h*w]` columns with zero same-padding.
fn im2col<S: Scalar>(input: &Tensor<S>, kernel: usize) -> Vec<S> {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let pad = (kernel - 1) / 2;
    let hw = h * w;
    let mut cols = vec![S::zero(); c * kernel * kernel * hw];
    let data = input.data();
    for ic in 0..c {
        let plane = &data[ic * hw..(ic + 1) * hw];
        for ky in 0..kernel {
            let dy = ky as isize - pad as isize;
            for kx in 0..kernel {
                let dx = kx as isize - pad as isize;
                let row = &mut cols[((ic * kernel + ky) * kernel + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    // Valid x range: 0 <= x+dx < w
                    let x0 = (-dx).max(0) as usize;
                    let x1 = ((w as isize - dx).min(w as isize)).max(0) as usize;
                    let src = &plane[sy * w..][x0.saturating_add_signed(dx)..];
                    let dst = &mut row[y * w + x0..y * w + x1];
                    dst.copy_from_slice(&src[..x1 - x0]);
                }
            }
        }
    }
    cols
}

/// Fold `[c*k*k, h*w]` columns back into `[c,h,w]` with accumulation.
fn col2im<S: Scalar>(cols: &[S], c: usize, h: usize, w: usize, kernel: usize) -> Tensor<S> {
    let pad = (kernel - 1) / 2;
    let hw = h * w;
    let mut out = Tensor::zeros(&[c, h, w]);
    let data = out.data_mut();
    for ic in 0..c {
        for ky in 0..kernel {
            let dy = ky as isize - pad as isize;
            for kx in 0..kernel {
                let dx = kx as isize - pad as isize;
                let row = &cols[((ic * kernel + ky) * kernel + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    let x0 = (-dx).max(0) as usize;
                    let x1 = ((w as isize - dx).min(w as isize)).max(0) as usize;
                    for x in x0..x1 {
                        let sx = x.saturating_add_signed(dx);
                        data[(ic * h + sy) * w + sx] = data[(ic * h + sy) * w + sx] + row[y * w + x];
                    }
                }
            }
        }
    }
    out
}

pub fn conv2d_forward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    bias: &Tensor<S>,
    kernel: usize,
) -> Tensor<S> {
    let (h, w) = (input.shape()[1], input.shape()[2]);
    let out_c = weight.shape()[0];
    let in_ck2 = weight.shape()[1] * kernel * kernel;
    let hw = h * w;
    let cols = im2col(input, kernel);
    let mut out = Tensor::zeros(&[out_c, h, w]);
    matmul_acc(weight.data(), &cols, out.data_mut(), out_c, in_ck2, hw);
    let data = out.data_mut();
    for oc in 0..out_c {
        let b = bias.data()[oc];
        for v in &mut data[oc * hw..(oc + 1) * hw] {
            *v = *v + b;
        }
    }
    out
}

/// Returns (d_weight, d_bias, d_input).
pub fn conv2d_backward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    kernel: usize,
    d_out: &Tensor<S>,
) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
    let (in_c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let out_c = weight.shape()[0];
    let k2 = in_c * kernel * kernel;
    let hw = h * w;

    let cols = im2col(input, kernel);

    let mut d_weight = Tensor::zeros(weight.shape());
    matmul_abt_acc(d_out.data(), &cols, d_weight.data_mut(), out_c, hw, k2);

    let mut d_bias = Tensor::zeros(&[out_c]);
    for oc in 0..out_c {
        let mut acc = S::zero();
        for &v in &d_out.data()[oc * hw..(oc + 1) * hw] {
            acc = acc + v;
        }
        d_bias.data_mut()[oc] = acc;
    }

    let mut d_cols = vec![S::zero(); k2 * hw];
    matmul_atb_acc(weight.data(), d_out.data(), &mut d_cols, out_c, k2, hw);
    let d_input = col2im(&d_cols, in_c, h, w, kernel);

    (d_weight, d_bias, d_input)
}

// ---------------------------------------------------------------------------
// maxpool / relu / flatten / dense
// ---------------------------------------------------------------------------

pub fn maxpool2_forward<S: Scalar>(input: &Tensor<S>) -> (Tensor<S>, Vec<u32>) {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[c, oh, ow]);
    let mut argmax = vec![0u32; c * oh * ow];
    let data = input.data();
    let out_data = out.data_mut();
    for ic in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = S::neg_infinity();
                let mut best_idx = 0u32;
                // First maximum in scan order wins ties.
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = (ic * h + oy * 2 + dy) * w + ox * 2 + dx;
                        let v = data[idx];
                        if v > best {
                            best = v;
                            best_idx = idx as u32;
                        }
                    }
                }
                let o = (ic * oh + oy) * ow + ox;
                out_data[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    (out, argmax)
}

pub fn maxpool2_backward<S: Scalar>(
    input_shape: &[usize],
    argmax: &[u32],
    d_out: &Tensor<S>,
) -> Tensor<S> {
    let mut d_input = Tensor::zeros(input_shape);
    let d = d_input.data_mut();
    for (o, &idx) in argmax.iter().enumerate() {
        d[idx as usize] = d[idx as usize] + d_out.data()[o];
    }
    d_input
}

pub fn relu_forward<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < S::zero() {
            *v = S::zero();
        }
    }
    out
}

pub fn relu_backward<S: Scalar>(input: &Tensor<S>, d_out: &Tensor<S>) -> Tensor<S> {
    let mut d_input = d_out.clone();
    for (d, &x) in d_input.data_mut().iter_mut().zip(input.data().iter()) {
        if x <= S::zero() {
            *d = S::zero();
        }
    }
    d_input
}

pub fn dense_forward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    bias: &Tensor<S>,
) -> Tensor<S> {
    let (outputs, inputs) = (weight.shape()[0], weight.shape()[1]);
    let mut out = Tensor::zeros(&[outputs]);
    let w = weight.data();
    let x = input.data();
    let o = out.data_mut();
    for i in 0..outputs {
        let row = &w[i * inputs..(i + 1) * inputs];
        let mut acc = bias.data()[i];
        for (&wv, &xv) in row.iter().zip(x.iter()) {
            acc = acc + wv * xv;
        }
        o[i] = acc;
    }
    out
}

/// Returns (d_weight, d_bias, d_input).
pub fn dense_backward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    d_out: &Tensor<S>,
) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
    let (outputs, inputs) = (weight.shape()[0], weight.shape()[1]);
    let mut d_weight = Tensor::zeros(weight.shape());
    let dw = d_weight.data_mut();
    for i in 0..outputs {
        let g = d_out.data()[i];
        let row = &mut dw[i * inputs..(i + 1) * inputs];
        for (rv, &xv) in row.iter_mut().zip(input.data().iter()) {
            *rv = g * xv;
        }
    }
    let d_bias = d_out.clone().reshape(&[outputs]);
    let mut d_input = Tensor::zeros(&[inputs]);
    matmul_atb_acc(
        weight.data(),
        d_out.data(),
        d_input.data_mut(),
        outputs,
        inputs,
        1,
    );
    (d_weight, d_bias, d_input)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_identity_kernel_passes_input_through() {
        let input = Tensor::<f64>::from_vec(&[1, 3, 3], (1..=9).map(|v| v as f64).collect());
        let weight = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]);
        let bias = Tensor::zeros(&[1]);
        let out = conv2d_forward(&input, &weight, &bias, 1);
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn conv_all_ones_kernel_sums_neighborhood() {
        // Interior pixel of a constant-c image under a 3x3 all-ones kernel
        // with zero padding sums 9 contributions of c.
        let c = 2.5f64;
        let input = Tensor::scalar_filled(&[1, 5, 5], c);
        let weight = Tensor::scalar_filled(&[1, 1, 3, 3], 1.0);
        let bias = Tensor::zeros(&[1]);
        let out = conv2d_forward(&input, &weight, &bias, 3);
        assert!((out.data()[2 * 5 + 2] - 9.0 * c).abs() < 1e-12);
        // Corner sees only the 2x2 in-bounds part.
        assert!((out.data()[0] - 4.0 * c).abs() < 1e-12);
    }

    #[test]
    fn maxpool_constant_halves_resolution() {
        let input = Tensor::scalar_filled(&[1, 4, 6], 3.0f32);
        let (out, _) = maxpool2_forward(&input);
        assert_eq!(out.shape(), &[1, 2, 3]);
        assert!(out.iter().all(|&v| v == 3.0));
    }

    #[test]
    fn maxpool_floor_on_odd_sizes() {
        let input = Tensor::<f32>::zeros(&[2, 75, 75]);
        let (out, _) = maxpool2_forward(&input);
        assert_eq!(out.shape(), &[2, 37, 37]);
    }

    #[test]
    fn dense_matches_hand_computation() {
        let input = Tensor::from_vec(&[2], vec![1.0f64, 2.0]);
        let weight = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let bias = Tensor::from_vec(&[2], vec![0.5, -0.5]);
        let out = dense_forward(&input, &weight, &bias);
        assert_eq!(out.data(), &[5.5, 10.5]);
    }

    #[test]
    fn relu_zeroes_negatives_and_gradients() {
        let input = Tensor::from_vec(&[4], vec![-1.0f64, 0.0, 2.0, -0.5]);
        let out = relu_forward(&input);
        assert_eq!(out.data(), &[0.0, 0.0, 2.0, 0.0]);
        let d = relu_backward(&input, &Tensor::scalar_filled(&[4], 1.0));
        assert_eq!(d.data(), &[0.0, 0.0, 1.0, 0.0]);
    }
}
