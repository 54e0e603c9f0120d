//! Domain-randomized synthetic scene generation: parts placed on the
//! support plane, rasterized through the camera, emitted with automatic
//! detection and orientation labels plus post-processing noise.

pub mod dataset;
pub mod part;
pub mod polygon;
mod raster;
mod scene;
mod texture;

pub use dataset::{
    generate_dataset, load_dataset_index, load_orient_samples, parse_label_line, DatasetManifest,
    EmitOptions, LoadedSample, OrientSample,
};
pub use part::{notched_rect, wrap_angle, PartSpec, Pose};
pub use raster::{postprocess, rasterize, BoxLabel, LabeledImage};
pub use scene::{
    sample_scene, CameraRanges, DomainConfig, NoiseParams, Placement, RandomizationConfig,
    SceneInstance,
};
pub use texture::{randomize_texture, Texture, TextureFamily, TextureKind};
