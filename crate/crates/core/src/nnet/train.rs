//! Mini-batch training loop: seeded shuffling, Adam updates, per-epoch
//! validation, early stopping with best-parameter restore.
//!
//! Batch gradients are computed in fixed-size chunks that are reduced in
//! chunk order, so results are bit-identical for any worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

use super::adam::{AdamConfig, AdamState};
use super::loss::{mse_loss, weighted_sse_loss};
use super::network::{accumulate_grads, scale_grads, LayerParams, Network};
use super::tensor::Tensor;

/// Samples are materialized lazily so datasets can stay in u8 form.
pub trait TrainData<S: Scalar>: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn input(&self, index: usize) -> Tensor<S>;
    fn target(&self, index: usize) -> Tensor<S>;
    /// Optional per-element loss weights (detector cells use these).
    fn weight(&self, _index: usize) -> Option<Tensor<S>> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; 0 stops at
    /// the first non-improving epoch.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 128,
            max_epochs: 100,
            patience: 10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidConfig(
                "learning_rate, batch_size and max_epochs must be positive".into(),
            ));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::InvalidConfig(format!(
                "patience {} must be smaller than max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
}

/// Fixed reduction granularity; independent of the rayon worker count.
const GRAD_CHUNK: usize = 16;

fn sample_loss_and_grads<S: Scalar, D: TrainData<S> + ?Sized>(
    net: &Network<S>,
    data: &D,
    index: usize,
) -> Result<(S, Vec<LayerParams<S>>)> {
    let input = data.input(index);
    let target = data.target(index);
    let cache = net.forward(&input)?;
    let (loss, d_out) = match data.weight(index) {
        Some(w) => weighted_sse_loss(cache.output(), &target, &w)?,
        None => mse_loss(cache.output(), &target)?,
    };
    let grads = net.backward(&cache, &d_out)?;
    Ok((loss, grads))
}

/// Mean loss and mean parameter gradients over `indices`.
fn batch_loss_and_grads<S: Scalar, D: TrainData<S> + ?Sized>(
    net: &Network<S>,
    data: &D,
    indices: &[usize],
) -> Result<(f64, Vec<LayerParams<S>>)> {
    let chunks: Vec<&[usize]> = indices.chunks(GRAD_CHUNK).collect();
    let partials: Vec<Result<(S, Vec<LayerParams<S>>)>> = chunks
        .par_iter()
        .map(|chunk| {
            let mut acc = net.zero_grads();
            let mut loss = S::zero();
            for &i in *chunk {
                let (l, g) = sample_loss_and_grads(net, data, i)?;
                loss = loss + l;
                accumulate_grads(&mut acc, &g);
            }
            Ok((loss, acc))
        })
        .collect();

    let mut total = net.zero_grads();
    let mut loss = S::zero();
    for p in partials {
        let (l, g) = p?;
        loss = loss + l;
        accumulate_grads(&mut total, &g);
    }
    let inv = S::one() / S::from_usize(indices.len()).unwrap();
    scale_grads(&mut total, inv);
    Ok((loss.to_f64_lossy() / indices.len() as f64, total))
}

/// Mean loss over a whole dataset, no gradients.
pub fn evaluate_loss<S: Scalar, D: TrainData<S> + ?Sized>(
    net: &Network<S>,
    data: &D,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let indices: Vec<usize> = (0..data.len()).collect();
    let chunks: Vec<&[usize]> = indices.chunks(GRAD_CHUNK).collect();
    let partials: Vec<Result<f64>> = chunks
        .par_iter()
        .map(|chunk| {
            let mut loss = 0.0;
            for &i in *chunk {
                let input = data.input(i);
                let target = data.target(i);
                let out = net.infer(&input)?;
                let l = match data.weight(i) {
                    Some(w) => weighted_sse_loss(&out, &target, &w)?.0,
                    None => mse_loss(&out, &target)?.0,
                };
                loss += l.to_f64_lossy();
            }
            Ok(loss)
        })
        .collect();
    let mut total = 0.0;
    for p in partials {
        total += p?;
    }
    Ok(total / data.len() as f64)
}

/// Train in place; returns the history. The network is left at the
/// parameters of the best validation epoch.
pub fn train<S: Scalar, D: TrainData<S> + ?Sized>(
    net: &mut Network<S>,
    train_set: &D,
    valid_set: &D,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut adam = AdamState::new(net);
    let adam_cfg = config.adam();
    let mut history = TrainHistory::default();
    let mut best_loss = f64::INFINITY;
    let mut best_params = net.params.clone();
    let mut stale_epochs = 0usize;

    let mut indices: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.max_epochs {
        // Fisher-Yates from a per-epoch stream.
        let mut r = rng::stream(config.seed, 0x5348_5546 ^ epoch as u64);
        for i in (1..indices.len()).rev() {
            let j = rand::Rng::gen_range(&mut r, 0..=i);
            indices.swap(i, j);
        }

        let mut train_loss = 0.0;
        let mut batches = 0usize;
        for batch in indices.chunks(config.batch_size) {
            let (loss, grads) = batch_loss_and_grads(net, train_set, batch)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            adam.step(net, &grads, &adam_cfg);
            train_loss += loss;
            batches += 1;
        }
        train_loss /= batches as f64;

        let valid_loss = evaluate_loss(net, valid_set)?;
        if !valid_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.epochs.push(EpochStats {
            train_loss,
            valid_loss,
        });

        if valid_loss < best_loss {
            best_loss = valid_loss;
            best_params = net.params.clone();
            history.best_epoch = epoch;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs > config.patience {
                break;
            }
        }
    }

    net.params = best_params;
    Ok(history)
}
