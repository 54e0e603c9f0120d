//! Part catalogue entries: the stable-pose silhouette stands in for the
//! 3D model, with one annotated grasp per part.

use std::f64::consts::TAU;

use crate::error::{Error, Result};

use super::polygon;

/// Planar object state on the support plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Radians, normalized to [0, 2*pi).
    pub theta: f64,
    pub class_id: usize,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64, class_id: usize) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
            class_id,
        }
    }
}

/// Normalize an angle to [0, 2*pi).
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t == TAU {
        0.0
    } else {
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartSpec {
    pub class_id: usize,
    pub name: String,
    /// Simple polygon in the part frame, meters, centroid at the origin.
    pub silhouette: Vec<[f64; 2]>,
    /// Grasp point in the part frame; must lie inside the silhouette.
    pub grasp_offset: [f64; 2],
    /// Gripper angle in the part frame, radians.
    pub grasp_angle: f64,
    /// Appearance is invariant under rotation by 2*pi/k.
    pub symmetry_order: usize,
}

impl PartSpec {
    /// Validate and construct; the silhouette is re-centered so its
    /// centroid sits exactly at the part-frame origin (the grasp offset is
    /// shifted along with it).
    pub fn new(
        class_id: usize,
        name: impl Into<String>,
        silhouette: Vec<[f64; 2]>,
        grasp_offset: [f64; 2],
        grasp_angle: f64,
        symmetry_order: usize,
    ) -> Result<Self> {
        if silhouette.len() < 3 {
            return Err(Error::InvalidSilhouette(format!(
                "need at least 3 vertices, got {}",
                silhouette.len()
            )));
        }
        if polygon::is_self_intersecting(&silhouette) {
            return Err(Error::InvalidSilhouette("polygon self-intersects".into()));
        }
        let mut silhouette = silhouette;
        // Enforce counter-clockwise winding.
        let area = polygon::signed_area(&silhouette);
        if area == 0.0 {
            return Err(Error::InvalidSilhouette("polygon has zero area".into()));
        }
        if area < 0.0 {
            silhouette.reverse();
        }
        let c = polygon::centroid(&silhouette);
        for v in &mut silhouette {
            v[0] -= c[0];
            v[1] -= c[1];
        }
        let grasp_offset = [grasp_offset[0] - c[0], grasp_offset[1] - c[1]];
        if !polygon::contains(&silhouette, grasp_offset) {
            return Err(Error::InvalidSilhouette(
                "grasp offset lies outside the silhouette".into(),
            ));
        }
        if symmetry_order == 0 {
            return Err(Error::InvalidSilhouette("symmetry order must be >= 1".into()));
        }
        Ok(Self {
            class_id,
            name: name.into(),
            silhouette,
            grasp_offset,
            grasp_angle,
            symmetry_order,
        })
    }

    /// Silhouette in world plane coordinates for a pose.
    pub fn world_silhouette(&self, pose: &Pose) -> Vec<[f64; 2]> {
        polygon::transform(&self.silhouette, pose.x, pose.y, pose.theta)
    }

    /// Radius of the bounding circle about the centroid.
    pub fn radius(&self) -> f64 {
        self.silhouette
            .iter()
            .map(|[x, y]| (x * x + y * y).sqrt())
            .fold(0.0, f64::max)
    }

    /// World-frame grasp position for a pose.
    pub fn grasp_position(&self, pose: &Pose) -> [f64; 2] {
        let (s, c) = pose.theta.sin_cos();
        [
            pose.x + c * self.grasp_offset[0] - s * self.grasp_offset[1],
            pose.y + s * self.grasp_offset[0] + c * self.grasp_offset[1],
        ]
    }

    /// World-frame grasp angle for a pose.
    pub fn world_grasp_angle(&self, pose: &Pose) -> f64 {
        wrap_angle(pose.theta + self.grasp_angle)
    }
}

/// Axis-aligned rectangle with a rectangular notch cut into one edge.
/// The notch stays strictly inside the edge, so the convex hull (and any
/// rotated bounding box) is that of the plain rectangle; this keeps the
/// projected bbox center close to the centroid at every orientation.
pub fn notched_rect(
    half_w: f64,
    half_h: f64,
    notch_center_x: f64,
    notch_half_w: f64,
    notch_depth: f64,
) -> Vec<[f64; 2]> {
    // Notch cut downward into the top edge (y = +half_h).
    let x0 = notch_center_x - notch_half_w;
    let x1 = notch_center_x + notch_half_w;
    vec![
        [-half_w, -half_h],
        [half_w, -half_h],
        [half_w, half_h],
        [x1, half_h],
        [x1, half_h - notch_depth],
        [x0, half_h - notch_depth],
        [x0, half_h],
        [-half_w, half_h],
    ]
}
