//! Fuse detection, orientation and geometry into a world-frame grasp pose
//! and run the simulated pick-and-place benchmark comparing the Real-Time
//! and High-Precision variants.

use std::collections::BTreeMap;

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::crop::{standardize, BBox};
use crate::detect::{detect_image, Detection};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, SupportPlane};
use crate::matching::{refine, KernelBank};
use crate::nnet::Network;
use crate::orient::{angular_error_deg, predict_angle};
use crate::render::{postprocess, rasterize, sample_scene, wrap_angle, PartSpec, Pose, RandomizationConfig};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Detector + orientation CNN.
    Rt,
    /// RT plus local pattern-matching refinement.
    Hp,
    /// Ground-truth poses fed straight through (closed-loop sanity).
    Oracle,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Rt => "rt",
            Variant::Hp => "hp",
            Variant::Oracle => "oracle",
        }
    }
}

/// World-frame grasp pose with estimation diagnostics.
#[derive(Debug, Clone)]
pub struct GraspPose {
    pub x: f64,
    pub y: f64,
    /// Gripper angle, radians in [0, 2*pi).
    pub theta: f64,
    pub class_id: usize,
    pub variant: Variant,
    pub bbox: BBox,
    /// CNN estimate before refinement, degrees.
    pub raw_theta_deg: f64,
    /// Refined estimate, degrees (HP only).
    pub refined_theta_deg: Option<f64>,
    pub match_score: Option<f64>,
}

/// Back-project the bbox center onto the support plane, then add the
/// part-frame grasp offset rotated by the estimated orientation.
pub fn grasp_pose(
    detection: &Detection,
    theta: f64,
    camera: &CameraModel<f64>,
    plane: &SupportPlane<f64>,
    part: &PartSpec,
    variant: Variant,
) -> Result<GraspPose> {
    let px = Vector2::new(
        crate::img::norm_to_px(detection.cx, camera.width),
        crate::img::norm_to_px(detection.cy, camera.height),
    );
    let world = camera.pixel_to_plane(&px, plane)?;
    let (s, c) = theta.sin_cos();
    let gx = world.x + c * part.grasp_offset[0] - s * part.grasp_offset[1];
    let gy = world.y + s * part.grasp_offset[0] + c * part.grasp_offset[1];
    Ok(GraspPose {
        x: gx,
        y: gy,
        theta: wrap_angle(theta + part.grasp_angle),
        class_id: detection.class_id,
        variant,
        bbox: BBox::from_normalized(detection.cx, detection.cy, detection.w, detection.h),
        raw_theta_deg: theta.to_degrees(),
        refined_theta_deg: None,
        match_score: None,
    })
}

/// Success thresholds; positional in meters, angular in degrees.
#[derive(Debug, Clone)]
pub struct Tolerances {
    pub eps_pos: f64,
    pub eps_ang_deg: f64,
    /// Per-class angular overrides.
    pub eps_ang_per_class: BTreeMap<usize, f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eps_pos: 0.005,
            eps_ang_deg: 10.0,
            eps_ang_per_class: BTreeMap::new(),
        }
    }
}

impl Tolerances {
    fn eps_ang(&self, class_id: usize) -> f64 {
        *self
            .eps_ang_per_class
            .get(&class_id)
            .unwrap_or(&self.eps_ang_deg)
    }
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub class_id: usize,
    pub variant: Variant,
    pub position_error: f64,
    pub angle_error_deg: f64,
    pub success: bool,
    pub flag: Option<&'static str>,
}

impl TrialResult {
    fn failed(class_id: usize, variant: Variant, flag: &'static str) -> Self {
        Self {
            class_id,
            variant,
            position_error: f64::INFINITY,
            angle_error_deg: f64::INFINITY,
            success: false,
            flag: Some(flag),
        }
    }
}

/// Tolerance-gated grasp check against the true pose: position error is
/// the planar distance between estimated and true grasp points, angle
/// error is symmetry-aware.
pub fn simulate_grasp(
    gp: &GraspPose,
    true_pose: &Pose,
    part: &PartSpec,
    tolerances: &Tolerances,
) -> TrialResult {
    if gp.class_id != true_pose.class_id {
        return TrialResult::failed(true_pose.class_id, gp.variant, "misclassification");
    }
    let true_grasp = part.grasp_position(true_pose);
    let true_angle = part.world_grasp_angle(true_pose);
    let position_error =
        ((gp.x - true_grasp[0]).powi(2) + (gp.y - true_grasp[1]).powi(2)).sqrt();
    let angle_error_deg = angular_error_deg(
        gp.theta.to_degrees(),
        true_angle.to_degrees(),
        part.symmetry_order,
    );
    let success = position_error <= tolerances.eps_pos && angle_error_deg <= tolerances.eps_ang(gp.class_id);
    TrialResult {
        class_id: gp.class_id,
        variant: gp.variant,
        position_error,
        angle_error_deg,
        success,
        flag: None,
    }
}

/// Everything the full pipeline needs at inference time.
pub struct PipelineModels {
    pub detector: Network<f32>,
    /// Detector input side (frames are downscaled to this for inference).
    pub detect_input: usize,
    pub orient: BTreeMap<usize, Network<f32>>,
    pub banks: BTreeMap<usize, KernelBank>,
    pub crop_side: usize,
    pub conf_threshold: f64,
    pub nms_iou: f64,
    pub window_deg: f64,
}

/// One end-to-end trial: render a scene, run the pipeline for the target
/// class, and gate the resulting grasp.
fn run_trial(
    config: &RandomizationConfig,
    models: &PipelineModels,
    variant: Variant,
    tolerances: &Tolerances,
    target_class: usize,
    scene_seed: u64,
) -> Result<TrialResult> {
    let scene = sample_scene(config, scene_seed)?;
    let labeled = rasterize(&config.parts, &scene);
    let image = postprocess(
        &labeled.image,
        &config.domain.noise,
        rng::derive(scene_seed, 0x504f),
    );
    let part = &config.parts[target_class];
    let placement = scene
        .placements
        .iter()
        .find(|p| p.pose.class_id == target_class)
        .expect("every class placed once");
    let true_pose = placement.pose;

    if variant == Variant::Oracle {
        let gt = labeled
            .detections
            .iter()
            .find(|d| d.class_id == target_class)
            .expect("label per placement");
        let det = Detection {
            class_id: gt.class_id,
            cx: gt.cx,
            cy: gt.cy,
            w: gt.w,
            h: gt.h,
            confidence: 1.0,
        };
        let gp = grasp_pose(&det, true_pose.theta, &scene.camera, &scene.plane, part, variant)?;
        return Ok(simulate_grasp(&gp, &true_pose, part, tolerances));
    }

    let scaled = crate::crop::resize(&image, models.detect_input)?;
    let detections = detect_image(&models.detector, &scaled, models.conf_threshold, models.nms_iou)?;
    let det = detections
        .iter()
        .filter(|d| d.class_id == target_class)
        .max_by(|a, b| a.confidence.partial_cmp(&b.confidence).unwrap());
    let Some(det) = det else {
        return Ok(TrialResult::failed(target_class, variant, "missed detection"));
    };

    let bbox = BBox::from_normalized(det.cx, det.cy, det.w, det.h);
    let crop = standardize(&image, &bbox, models.crop_side)?;
    let orient_net = models
        .orient
        .get(&target_class)
        .ok_or_else(|| Error::Prerequisite(format!("no orientation model for class {target_class}")))?;
    let estimate = match predict_angle(orient_net, &crop) {
        Ok(e) => e,
        Err(Error::IndeterminateAngle { .. }) => {
            return Ok(TrialResult::failed(target_class, variant, "indeterminate angle"));
        }
        Err(e) => return Err(e),
    };

    let (theta, refined_deg, score) = if variant == Variant::Hp {
        let bank = models
            .banks
            .get(&target_class)
            .ok_or_else(|| Error::Prerequisite(format!("no kernel bank for class {target_class}")))?;
        match refine(bank, &crop, estimate.theta.to_degrees(), models.window_deg) {
            Ok(m) => (
                m.theta_deg.to_radians(),
                Some(m.theta_deg),
                Some(m.score),
            ),
            Err(Error::UnmatchableCrop) => (estimate.theta, None, None),
            Err(e) => return Err(e),
        }
    } else {
        (estimate.theta, None, None)
    };

    let mut gp = grasp_pose(det, theta, &scene.camera, &scene.plane, part, variant)?;
    gp.raw_theta_deg = estimate.theta.to_degrees();
    gp.refined_theta_deg = refined_deg;
    gp.match_score = score;
    Ok(simulate_grasp(&gp, &true_pose, part, tolerances))
}

#[derive(Debug, Clone)]
pub struct ClassOutcome {
    pub class_id: usize,
    pub trials: usize,
    pub successes: usize,
}

#[derive(Debug, Clone)]
pub struct BenchmarkTable {
    pub variant: Variant,
    pub per_class: Vec<ClassOutcome>,
    pub results: Vec<TrialResult>,
}

impl BenchmarkTable {
    pub fn overall_rate(&self) -> f64 {
        let trials: usize = self.per_class.iter().map(|c| c.trials).sum();
        let succ: usize = self.per_class.iter().map(|c| c.successes).sum();
        if trials == 0 {
            0.0
        } else {
            succ as f64 / trials as f64
        }
    }
}

/// Run `trials_per_class` end-to-end grasp trials per class. Trials are
/// independent and deterministic given the seed; aggregation is ordered
/// by (class, trial).
pub fn run_benchmark(
    config: &RandomizationConfig,
    models: &PipelineModels,
    variant: Variant,
    tolerances: &Tolerances,
    trials_per_class: usize,
    seed: u64,
) -> Result<BenchmarkTable> {
    let mut jobs = Vec::new();
    for part in &config.parts {
        for trial in 0..trials_per_class {
            jobs.push((part.class_id, trial));
        }
    }
    let results: Vec<Result<TrialResult>> = jobs
        .par_iter()
        .map(|(class_id, trial)| {
            let scene_seed = rng::derive(seed, (*class_id as u64) << 32 | *trial as u64);
            run_trial(config, models, variant, tolerances, *class_id, scene_seed)
        })
        .collect();

    let mut flat = Vec::with_capacity(results.len());
    for r in results {
        flat.push(r?);
    }
    let per_class = config
        .parts
        .iter()
        .map(|p| {
            let class_results: Vec<&TrialResult> =
                flat.iter().filter(|r| r.class_id == p.class_id).collect();
            ClassOutcome {
                class_id: p.class_id,
                trials: class_results.len(),
                successes: class_results.iter().filter(|r| r.success).count(),
            }
        })
        .collect();
    Ok(BenchmarkTable {
        variant,
        per_class,
        results: flat,
    })
}
