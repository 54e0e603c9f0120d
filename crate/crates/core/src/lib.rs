//! Two-stage multi-object grasp pose estimation on a synthetic desk scene.
//!
//! The pipeline stages are:
//!
//! 1. **render** – domain-randomized scene generation: parts placed on a
//!    support plane, rasterized through a pinhole camera, with automatic
//!    detection and orientation labels.
//! 2. **detect** – single-shot grid detector (Stage 1) plus detection
//!    metrics (IoU, NMS, mAP50) and the real-data weighting protocol.
//! 3. **crop** – ROI standardization between stages: cut, zero-pad to
//!    square, resize without changing orientation.
//! 4. **orient** – per-class orientation CNNs (Stage 2) regressing
//!    sin/cos of the in-plane angle, decoded with atan2.
//! 5. **matching** – high-precision refinement against a bank of rotated
//!    kernel images (the RT vs HP differentiator).
//! 6. **grasp** – fuse detection + orientation + geometry into a
//!    world-frame grasp pose and run the simulated pick-and-place
//!    benchmark.
//!
//! [`geometry`] owns the pinhole camera model and all projection math;
//! [`nnet`] is the from-scratch tensor/NN engine both trainable stages
//! run on. Core math is generic over the scalar type (see [`Scalar`]);
//! the aliases below pin the concrete types the pipeline uses.

pub mod config;
pub mod crop;
pub mod detect;
pub mod error;
pub mod geometry;
pub mod grasp;
pub mod img;
pub mod matching;
pub mod nnet;
pub mod orient;
pub mod pipeline;
pub mod render;
pub mod rng;
pub mod scalar;
pub mod viz;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar used for geometry, scoring and metrics.
pub type Real = f64;

/// Scalar used for network training (fast path).
pub type TrainFloat = f32;

/// Camera/world geometry at the pipeline's working precision.
pub type CameraModel = geometry::CameraModel<Real>;
pub type RigidTransform = geometry::RigidTransform<Real>;
pub type SupportPlane = geometry::SupportPlane<Real>;

/// Tensors at the two precisions the engine is exercised at:
/// `Tensor32` for training speed, `Tensor64` for tight gradient checks.
pub type Tensor32 = nnet::Tensor<f32>;
pub type Tensor64 = nnet::Tensor<f64>;
pub type Network32 = nnet::Network<f32>;
pub type Network64 = nnet::Network<f64>;
