//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // geometry
    #[error("behind camera: point has non-positive depth {depth}")]
    BehindCamera { depth: f64 },
    #[error("no intersection: back-projected ray is parallel to the support plane")]
    RayParallelToPlane,
    #[error("no intersection: plane point lies behind the camera")]
    IntersectionBehindCamera,
    #[error("degenerate calibration target: {0}")]
    DegenerateCalibration(String),
    #[error("need at least {needed} correspondences, got {got}")]
    TooFewCorrespondences { needed: usize, got: usize },

    // render
    #[error("placement region too crowded: gave up after {attempts} attempts")]
    PlacementTooCrowded { attempts: usize },
    #[error("texture config enables no kinds")]
    EmptyTextureKinds,
    #[error("invalid part silhouette: {0}")]
    InvalidSilhouette(String),

    // nnet
    #[error("shape mismatch at layer {layer}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        layer: usize,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("forward cache does not match network (stale cache)")]
    StaleCache,
    #[error("training diverged: loss is not finite at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("model file error: {0}")]
    ModelFormat(String),

    // detect
    #[error("two objects fall into grid cell ({row},{col}); scenes must keep parts separated")]
    CellCollision { row: usize, col: usize },

    // crop / images
    #[error("bbox does not intersect the image")]
    EmptyCropRegion,
    #[error("expected a square image, got {width}x{height}")]
    NonSquareImage { width: usize, height: usize },

    // orient / matching
    #[error("indeterminate angle: sin/cos magnitude {magnitude} is below threshold")]
    IndeterminateAngle { magnitude: f64 },
    #[error("kernel bank step {step} does not divide 360 degrees")]
    BadBankStep { step: f64 },
    #[error("unmatchable crop: all similarity scores are degenerate")]
    UnmatchableCrop,
    #[error("similarity mask is empty")]
    EmptyMask,

    // configuration / orchestration
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("missing prerequisite: {0}")]
    Prerequisite(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Processes map errors onto exit codes: 1 usage, 2 prerequisite, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Prerequisite(_) => 2,
            Error::TrainingDiverged { .. } => 3,
            _ => 1,
        }
    }
}
