//! Adam optimizer with bias correction.

use crate::scalar::Scalar;

use super::network::{LayerParams, Network};
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<S: Scalar> {
    m: Vec<LayerParams<S>>,
    v: Vec<LayerParams<S>>,
    step: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(net: &Network<S>) -> Self {
        Self {
            m: net.zero_grads(),
            v: net.zero_grads(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over every parameter tensor of the network.
    pub fn step(&mut self, net: &mut Network<S>, grads: &[LayerParams<S>], cfg: &AdamConfig) {
        self.step += 1;
        let t = self.step as i32;
        let b1 = S::from_f64_lossy(cfg.beta1);
        let b2 = S::from_f64_lossy(cfg.beta2);
        let lr = S::from_f64_lossy(cfg.learning_rate);
        let eps = S::from_f64_lossy(cfg.epsilon);
        let one = S::one();
        let bias1 = one - b1.powi(t);
        let bias2 = one - b2.powi(t);

        for (li, layer) in net.params.iter_mut().enumerate() {
            for (pi, p) in layer.iter_mut().enumerate() {
                let g: &Tensor<S> = &grads[li][pi];
                let m = self.m[li][pi].data_mut();
                let v = self.v[li][pi].data_mut();
                let pd = p.data_mut();
                for i in 0..pd.len() {
                    let gi = g.data()[i];
                    m[i] = b1 * m[i] + (one - b1) * gi;
                    v[i] = b2 * v[i] + (one - b2) * gi * gi;
                    let m_hat = m[i] / bias1;
                    let v_hat = v[i] / bias2;
                    pd[i] = pd[i] - lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::layers::LayerSpec;
    use crate::nnet::network::NetworkSpec;

    fn one_param_net(value: f64) -> Network<f64> {
        let spec = NetworkSpec::new(vec![LayerSpec::Dense {
            inputs: 1,
            outputs: 1,
        }]);
        let mut net = Network::init(spec, 0);
        net.params[0][0] = Tensor::from_vec(&[1, 1], vec![value]);
        net.params[0][1] = Tensor::from_vec(&[1], vec![0.0]);
        net
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_learning_rate() {
        // With bias correction at t=1 and g=1: update = lr * 1/(1 + eps'),
        // i.e. the parameter decreases by almost exactly lr.
        let mut net = one_param_net(1.0);
        let mut state = AdamState::new(&net);
        let cfg = AdamConfig::default();
        let mut grads = net.zero_grads();
        grads[0][0] = Tensor::from_vec(&[1, 1], vec![1.0]);
        grads[0][1] = Tensor::from_vec(&[1], vec![0.0]);
        state.step(&mut net, &grads, &cfg);
        let delta = net.params[0][0].data()[0] - 1.0;
        assert!((delta + cfg.learning_rate).abs() < 1e-6 * cfg.learning_rate);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut net = one_param_net(0.7);
        let mut state = AdamState::new(&net);
        let cfg = AdamConfig::default();
        let grads = net.zero_grads();
        for _ in 0..5 {
            state.step(&mut net, &grads, &cfg);
        }
        assert_eq!(net.params[0][0].data()[0], 0.7);
        assert_eq!(net.params[0][1].data()[0], 0.0);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut net = one_param_net(0.3);
            let mut state = AdamState::new(&net);
            let cfg = AdamConfig::default();
            for i in 0..10 {
                let mut grads = net.zero_grads();
                grads[0][0] = Tensor::from_vec(&[1, 1], vec![0.1 * (i as f64 + 1.0)]);
                grads[0][1] = Tensor::from_vec(&[1], vec![-0.05]);
                state.step(&mut net, &grads, &cfg);
            }
            (
                net.params[0][0].data()[0].to_bits(),
                net.params[0][1].data()[0].to_bits(),
            )
        };
        assert_eq!(run(), run());
    }
}
