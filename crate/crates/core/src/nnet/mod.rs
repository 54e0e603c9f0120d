//! Minimal tensor and neural-network engine: forward/backward passes for
//! conv, maxpool, ReLU and dense layers, MSE loss, Adam, a training loop
//! with early stopping, and finite-difference gradient verification.
//!
//! Generic over the scalar type: f32 is the training fast path, f64 the
//! verification precision for tight gradient checks.

mod adam;
pub mod gradcheck;
mod io;
mod layers;
mod loss;
mod network;
mod tensor;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use io::{crc32, decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use layers::LayerSpec;
pub use loss::{mse_loss, weighted_sse_loss};
pub use network::{
    accumulate_grads, scale_grads, ForwardCache, LayerParams, Network, NetworkSpec,
};
pub use tensor::Tensor;
pub use train::{evaluate_loss, train, EpochStats, TrainConfig, TrainData, TrainHistory};
