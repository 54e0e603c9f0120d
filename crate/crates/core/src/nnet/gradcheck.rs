//! Finite-difference gradient verification.
//!
//! Central differences are only a valid derivative oracle where the
//! network is differentiable; ReLU kinks and max-pool ties inside the
//! perturbation radius invalidate the comparison, so callers screen
//! candidate networks with [`kink_risk`] first. Away from kinks the loss
//! is exactly quadratic in any single parameter, so the central
//! difference has no truncation error; the finite-difference losses are
//! accumulated in f64 to keep the rounding floor low even for f32
//! networks.

use crate::error::Result;
use crate::scalar::Scalar;

use super::loss::mse_loss;
use super::network::Network;
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Smallest analytic gradient magnitude seen (diagnostic: relative
    /// error is meaningless where the true gradient underflows the
    /// finite-difference noise floor).
    pub min_abs_grad: f64,
    pub params_checked: usize,
}

/// f64 MSE of a network output against a target, regardless of the
/// network's scalar type.
fn loss_f64<S: Scalar>(output: &Tensor<S>, target: &[f64]) -> f64 {
    let n = output.len() as f64;
    output
        .iter()
        .zip(target)
        .map(|(&y, &t)| {
            let d = y.to_f64_lossy() - t;
            d * d
        })
        .sum::<f64>()
        / n
}

/// Compare analytic gradients of the MSE loss against central finite
/// differences with step `h`. Relative error uses
/// `|fd - g| / max(|fd|, |g|, 1e-6)`.
pub fn finite_difference_check<S: Scalar>(
    net: &Network<S>,
    input: &Tensor<S>,
    target: &Tensor<S>,
    h: f64,
) -> Result<GradCheckReport> {
    let cache = net.forward(input)?;
    let (_, d_out) = mse_loss(cache.output(), target)?;
    let analytic = net.backward(&cache, &d_out)?;
    let target_f64: Vec<f64> = target.iter().map(|&t| t.to_f64_lossy()).collect();

    let hs = S::from_f64_lossy(h);
    let mut work = net.clone();
    let mut max_rel = 0.0f64;
    let mut min_abs = f64::INFINITY;
    let mut checked = 0usize;

    for li in 0..net.params.len() {
        for pi in 0..net.params[li].len() {
            for i in 0..net.params[li][pi].len() {
                let orig = net.params[li][pi].data()[i];

                work.params[li][pi].data_mut()[i] = orig + hs;
                let loss_p = loss_f64(&work.infer(input)?, &target_f64);

                work.params[li][pi].data_mut()[i] = orig - hs;
                let loss_m = loss_f64(&work.infer(input)?, &target_f64);

                work.params[li][pi].data_mut()[i] = orig;

                let fd = (loss_p - loss_m) / (2.0 * h);
                let g = analytic[li][pi].data()[i].to_f64_lossy();
                let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-6);
                if rel > max_rel {
                    max_rel = rel;
                }
                if g.abs() < min_abs {
                    min_abs = g.abs();
                }
                checked += 1;
            }
        }
    }

    Ok(GradCheckReport {
        max_rel_err: max_rel,
        min_abs_grad: min_abs,
        params_checked: checked,
    })
}

/// True when some ReLU pre-activation sits within `margin` of zero or some
/// pool window's top two values are within `margin` of each other, i.e. a
/// parameter perturbation could cross a non-differentiable point.
pub fn kink_risk<S: Scalar>(net: &Network<S>, input: &Tensor<S>, margin: f64) -> Result<bool> {
    use super::layers::LayerSpec;
    let m = S::from_f64_lossy(margin);
    let mut x = input.clone();
    for (i, layer) in net.spec.layers.iter().enumerate() {
        match layer {
            LayerSpec::Relu => {
                if x.iter().any(|v| v.abs() < m) {
                    return Ok(true);
                }
            }
            LayerSpec::MaxPool2 => {
                let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                for ic in 0..c {
                    for oy in 0..h / 2 {
                        for ox in 0..w / 2 {
                            let mut vals = [S::zero(); 4];
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    vals[dy * 2 + dx] =
                                        x.data()[(ic * h + oy * 2 + dy) * w + ox * 2 + dx];
                                }
                            }
                            vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
                            if vals[0] - vals[1] < m {
                                return Ok(true);
                            }
                        }
                    }
                }
            }
            _ => {}
        }
        // Advance the activation using the real forward kernels.
        let sub = Network {
            spec: super::network::NetworkSpec::new(vec![*layer]),
            params: vec![net.params[i].clone()],
        };
        x = sub.infer(&x)?;
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::layers::LayerSpec;
    use crate::nnet::network::NetworkSpec;
    use crate::rng;
    use rand::Rng as _;

    fn random_input<S: Scalar>(shape: &[usize], seed: u64) -> Tensor<S> {
        let mut r = rng::stream(seed, 99);
        let n: usize = shape.iter().product();
        Tensor::from_vec(
            shape,
            (0..n)
                .map(|_| S::from_f64_lossy(r.gen_range(-1.0..1.0)))
                .collect(),
        )
    }

    fn conv_spec() -> NetworkSpec {
        NetworkSpec::new(vec![
            LayerSpec::Conv2d {
                in_channels: 2,
                out_channels: 3,
                kernel: 3,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Flatten,
            LayerSpec::Dense {
                inputs: 3 * 3 * 3,
                outputs: 4,
            },
        ])
    }

    #[test]
    fn small_conv_net_gradient_matches_f64() {
        for seed in 0..32 {
            let net = Network::<f64>::init(conv_spec(), seed);
            let input = random_input(&[2, 6, 6], seed);
            if kink_risk(&net, &input, 0.02).unwrap() {
                continue;
            }
            let target = random_input(&[4], seed + 1000);
            let report = finite_difference_check(&net, &input, &target, 1e-3).unwrap();
            assert!(
                report.max_rel_err < 1e-5,
                "seed {seed}: rel err {}",
                report.max_rel_err
            );
            return;
        }
        panic!("no kink-free instance found");
    }

    #[test]
    fn small_conv_net_gradient_matches_f32() {
        for seed in 0..32 {
            let net = Network::<f32>::init(conv_spec(), seed);
            let input = random_input(&[2, 6, 6], seed);
            if kink_risk(&net, &input, 0.02).unwrap() {
                continue;
            }
            let target = random_input(&[4], seed + 1000);
            let report = finite_difference_check(&net, &input, &target, 1e-3).unwrap();
            assert!(
                report.max_rel_err < 1e-2,
                "seed {seed}: rel err {}",
                report.max_rel_err
            );
            return;
        }
        panic!("no kink-free instance found");
    }
}
