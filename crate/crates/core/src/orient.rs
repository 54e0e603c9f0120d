//! Stage 2: per-class orientation estimation. The network regresses raw
//! sin/cos of the in-plane angle from a standardized crop; atan2 decodes
//! the angle and tolerates any positive output magnitude. Symmetry is
//! handled at evaluation time through the part's symmetry order.

use std::f64::consts::TAU;

use crate::detect::{image_to_planar, planar_to_tensor};
use crate::error::{Error, Result};
use crate::img::RgbImage;
use crate::nnet::{LayerSpec, Network, NetworkSpec, Tensor, TrainData};
use crate::render::wrap_angle;

/// Decoded network output.
#[derive(Debug, Clone, Copy)]
pub struct AngleEstimate {
    /// Radians in [0, 2*pi).
    pub theta: f64,
    pub raw_sin: f64,
    pub raw_cos: f64,
    /// sqrt(sin^2 + cos^2); a confidence diagnostic, 1 when calibrated.
    pub magnitude: f64,
}

pub fn angle_to_sincos(theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (s, c)
}

/// Decode via atan2, invariant to positive scaling of (s, c). Near-zero
/// magnitude signals an untrained or degenerate output.
pub fn sincos_to_angle(s: f64, c: f64) -> Result<f64> {
    let magnitude = (s * s + c * c).sqrt();
    if magnitude < 1e-9 {
        return Err(Error::IndeterminateAngle { magnitude });
    }
    Ok(wrap_angle(f64::atan2(s, c)))
}

pub fn estimate_from_outputs(raw_sin: f64, raw_cos: f64) -> Result<AngleEstimate> {
    let theta = sincos_to_angle(raw_sin, raw_cos)?;
    Ok(AngleEstimate {
        theta,
        raw_sin,
        raw_cos,
        magnitude: (raw_sin * raw_sin + raw_cos * raw_cos).sqrt(),
    })
}

/// Feature extractor of four conv+ReLU+pool blocks and a four-layer dense
/// head ending in the two sin/cos outputs. Four floor-halvings divide the
/// side by 16; the pooled side must be at least 4.
pub fn build_orientation_net(input_channels: usize, side: usize) -> Result<NetworkSpec> {
    // Nested floor halvings: floor(floor(floor(floor(n/2)/2)/2)/2) = n/16.
    let pooled = side / 16;
    if pooled < 4 {
        return Err(Error::InvalidConfig(format!(
            "orientation input side {side} pools down to {pooled} (< 4)"
        )));
    }
    let flat = 32 * pooled * pooled;
    let conv = |i, o| LayerSpec::Conv2d {
        in_channels: i,
        out_channels: o,
        kernel: 3,
    };
    let dense = |i, o| LayerSpec::Dense {
        inputs: i,
        outputs: o,
    };
    Ok(NetworkSpec::new(vec![
        conv(input_channels, 8),
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
        conv(8, 16),
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
        conv(16, 32),
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
        conv(32, 32),
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
        LayerSpec::Flatten,
        dense(flat, 128),
        LayerSpec::Relu,
        dense(128, 64),
        LayerSpec::Relu,
        dense(64, 16),
        LayerSpec::Relu,
        dense(16, 2),
    ]))
}

/// Rotation augmentation: the k-th sample is the square input rotated by
/// `k * 360/count` degrees about its center with the label advanced by the
/// same amount; k = 0 is the original, bit-exact.
pub fn rotate_augment(
    image: &RgbImage,
    theta_label: f64,
    count: usize,
) -> Result<Vec<(RgbImage, f64)>> {
    if !image.is_square() {
        return Err(Error::NonSquareImage {
            width: image.width(),
            height: image.height(),
        });
    }
    let step_deg = 360.0 / count as f64;
    let step_rad = TAU / count as f64;
    Ok((0..count)
        .map(|k| {
            (
                image.rotate_ccw(k as f64 * step_deg),
                wrap_angle(theta_label + k as f64 * step_rad),
            )
        })
        .collect())
}

/// Symmetry-aware angular error in degrees, in [0, 180/k].
pub fn angular_error_deg(est_deg: f64, gt_deg: f64, symmetry_order: usize) -> f64 {
    let k = symmetry_order.max(1);
    let period = 360.0 / k as f64;
    (0..k)
        .map(|j| wrap180(est_deg - gt_deg - j as f64 * period).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Map degrees into (-180, 180].
pub fn wrap180(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Fraction of estimates whose symmetry-aware error is strictly below the
/// threshold (degrees).
pub fn success_rate(
    estimates_deg: &[f64],
    ground_truths_deg: &[f64],
    threshold_deg: f64,
    symmetry_order: usize,
) -> Result<f64> {
    if estimates_deg.is_empty() || estimates_deg.len() != ground_truths_deg.len() {
        return Err(Error::EmptyDataset);
    }
    let hits = estimates_deg
        .iter()
        .zip(ground_truths_deg)
        .filter(|(e, g)| angular_error_deg(**e, **g, symmetry_order) < threshold_deg)
        .count();
    Ok(hits as f64 / estimates_deg.len() as f64)
}

/// Crop set for training: planar u8 images plus sin/cos targets.
pub struct OrientDataset {
    images: Vec<Vec<u8>>,
    targets: Vec<Tensor<f32>>,
    /// Ground-truth angles (radians), parallel to images.
    pub thetas: Vec<f64>,
    side: usize,
}

impl OrientDataset {
    pub fn new(side: usize) -> Self {
        Self {
            images: Vec::new(),
            targets: Vec::new(),
            thetas: Vec::new(),
            side,
        }
    }

    pub fn push(&mut self, image: &RgbImage, theta: f64) {
        assert_eq!(image.width(), self.side);
        assert_eq!(image.height(), self.side);
        let (s, c) = angle_to_sincos(theta);
        self.images.push(image_to_planar(image));
        self.targets
            .push(Tensor::from_vec(&[2], vec![s as f32, c as f32]));
        self.thetas.push(wrap_angle(theta));
    }

    /// Push a base crop with all its rotations.
    pub fn push_augmented(&mut self, image: &RgbImage, theta: f64, rotations: usize) -> Result<()> {
        for (img, label) in rotate_augment(image, theta, rotations)? {
            self.push(&img, label);
        }
        Ok(())
    }

    pub fn side(&self) -> usize {
        self.side
    }
}

impl TrainData<f32> for OrientDataset {
    fn len(&self) -> usize {
        self.images.len()
    }
    fn input(&self, index: usize) -> Tensor<f32> {
        planar_to_tensor(&self.images[index], self.side, self.side)
    }
    fn target(&self, index: usize) -> Tensor<f32> {
        self.targets[index].clone()
    }
}

/// Predict the angle for one standardized crop.
pub fn predict_angle(net: &Network<f32>, crop: &RgbImage) -> Result<AngleEstimate> {
    let input = planar_to_tensor::<f32>(&image_to_planar(crop), crop.height(), crop.width());
    let out = net.infer(&input)?;
    estimate_from_outputs(out.data()[0] as f64, out.data()[1] as f64)
}

/// Per-sample errors (degrees) of a model over a dataset, symmetry-aware.
pub fn evaluate_errors(
    net: &Network<f32>,
    data: &OrientDataset,
    symmetry_order: usize,
) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    let indices: Vec<usize> = (0..data.thetas.len()).collect();
    indices
        .par_iter()
        .map(|&i| {
            let input = planar_to_tensor::<f32>(&data.images[i], data.side, data.side);
            let out = net.infer(&input)?;
            let est = estimate_from_outputs(out.data()[0] as f64, out.data()[1] as f64)?;
            Ok(angular_error_deg(
                est.theta.to_degrees(),
                data.thetas[i].to_degrees(),
                symmetry_order,
            ))
        })
        .collect()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_identities() {
        assert_eq!(angle_to_sincos(0.0), (0.0, 1.0));
        assert_eq!(sincos_to_angle(0.0, 1.0).unwrap(), 0.0);
        let (s, c) = angle_to_sincos(std::f64::consts::FRAC_PI_2);
        assert!((s - 1.0).abs() < 1e-15 && c.abs() < 1e-15);
        assert!(
            (sincos_to_angle(1.0, 0.0).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-15
        );
        for theta in [0.1, 1.7, 3.3, 5.9] {
            let (s, c) = angle_to_sincos(theta);
            assert!((sincos_to_angle(s, c).unwrap() - theta).abs() < 1e-9);
        }
    }

    #[test]
    fn decode_reference_value() {
        // atan2(0.6, 0.8) = 0.6435 rad = 36.8699 degrees.
        let theta = sincos_to_angle(0.6, 0.8).unwrap();
        assert!((theta - 0.6435011087932844).abs() < 1e-12);
        assert!((theta.to_degrees() - 36.86989764584402).abs() < 1e-9);
    }

    #[test]
    fn decode_is_scale_invariant() {
        for lambda in [0.03, 1.0, 17.5] {
            let a = sincos_to_angle(0.6, -0.8).unwrap();
            let b = sincos_to_angle(0.6 * lambda, -0.8 * lambda).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn near_zero_magnitude_is_indeterminate() {
        let err = sincos_to_angle(1e-12, -1e-12).unwrap_err();
        assert!(matches!(err, Error::IndeterminateAngle { .. }));
    }

    #[test]
    fn net_output_shape_is_two() {
        for side in [96usize, 300] {
            let spec = build_orientation_net(3, side).unwrap();
            let out = spec.output_shape(&[3, side, side]).unwrap();
            assert_eq!(out, vec![2]);
        }
        assert!(build_orientation_net(3, 50).is_err());
    }

    #[test]
    fn pooled_side_follows_floor_rule() {
        // 300 -> 150 -> 75 -> 37 -> 18: flatten sees 32 * 18 * 18.
        let spec = build_orientation_net(3, 300).unwrap();
        let flat_inputs = spec
            .layers
            .iter()
            .find_map(|l| match l {
                LayerSpec::Dense { inputs, .. } => Some(*inputs),
                _ => None,
            })
            .unwrap();
        // The builder uses side/16; for 300 the true pooled side is 18
        // (floor chain), so the builder must agree.
        assert_eq!(flat_inputs, 32 * 18 * 18);
        let runtime = spec.output_shape(&[3, 300, 300]).unwrap();
        assert_eq!(runtime, vec![2]);
    }

    #[test]
    fn augment_counts_and_labels() {
        let img = RgbImage::new(16, 16);
        let samples = rotate_augment(&img, 0.3, 360).unwrap();
        assert_eq!(samples.len(), 360);
        // 15 base images at 360 rotations: 5400 samples.
        assert_eq!(15 * samples.len(), 5400);
        // Label equivariance: label(k) - label(0) = k * step (mod 2pi).
        let step = TAU / 360.0;
        for (k, (_, label)) in samples.iter().enumerate() {
            let expect = wrap_angle(0.3 + k as f64 * step);
            assert!((label - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn augment_k0_is_bit_exact() {
        let mut img = RgbImage::new(8, 8);
        img.set(3, 5, [9, 8, 7]);
        let samples = rotate_augment(&img, 1.0, 4).unwrap();
        assert_eq!(samples[0].0, img);
    }

    #[test]
    fn augment_rejects_non_square() {
        let img = RgbImage::new(8, 6);
        assert!(rotate_augment(&img, 0.0, 4).is_err());
    }

    #[test]
    fn angular_error_cases() {
        assert!((angular_error_deg(359.0, 1.0, 1) - 2.0).abs() < 1e-12);
        assert!((angular_error_deg(95.0, 90.0, 1) - 5.0).abs() < 1e-12);
        assert!((angular_error_deg(185.0, 0.0, 2) - 5.0).abs() < 1e-12);
        // Bounded by 180/k and symmetric.
        for (e, g, k) in [(13.0, 290.0, 1usize), (45.0, 170.0, 2), (10.0, 350.0, 4)] {
            let err = angular_error_deg(e, g, k);
            assert!(err <= 180.0 / k as f64 + 1e-12);
            assert!((err - angular_error_deg(g, e, k)).abs() < 1e-12);
        }
    }

    #[test]
    fn success_rate_cases() {
        let rate = success_rate(&[3.0, 12.0], &[0.0, 0.0], 10.0, 1).unwrap();
        assert_eq!(rate, 0.5);
        let all = success_rate(&[0.0, 0.0], &[0.0, 0.0], 10.0, 1).unwrap();
        assert_eq!(all, 1.0);
        assert!(success_rate(&[], &[], 10.0, 1).is_err());
    }
}
