//! Top-down rasterization of a scene through its camera, with automatic
//! detection and orientation labels, plus the post-processing noise stage.
//!
//! No anti-aliasing: each pixel is colored by point-sampling the surface
//! at the pixel center, which keeps renders bit-deterministic and label
//! proofs simple.

use nalgebra::{Vector2, Vector3};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::img::{px_to_norm, RgbImage};
use crate::rng;

use super::polygon;
use super::scene::{NoiseParams, SceneInstance};

/// Ground-truth axis-aligned box, normalized center/size in [0,1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxLabel {
    pub class_id: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub image: RgbImage,
    pub detections: Vec<BoxLabel>,
    /// World-frame theta per placement, parallel to `detections`.
    pub orientations: Vec<f64>,
}

/// Render the scene: plane texture everywhere, part texture where the
/// back-projected pixel center falls inside a placed silhouette. Labels
/// come from the projected silhouette vertices and the placement poses.
pub fn rasterize(parts: &[super::part::PartSpec], scene: &SceneInstance) -> LabeledImage {
    let cam = &scene.camera;
    let (w, h) = (cam.width, cam.height);

    // Part-local containment data per placement.
    struct Instance<'a> {
        silhouette: &'a [[f64; 2]],
        x: f64,
        y: f64,
        sin_t: f64,
        cos_t: f64,
        texture: &'a super::texture::Texture,
        radius2: f64,
    }
    let part_for = |class_id: usize| -> &super::part::PartSpec {
        parts
            .iter()
            .find(|p| p.class_id == class_id)
            .expect("placement class present in the part list")
    };
    let instances: Vec<Instance<'_>> = scene
        .placements
        .iter()
        .map(|p| {
            let part = part_for(p.pose.class_id);
            let (s, c) = p.pose.theta.sin_cos();
            let r = part.radius();
            Instance {
                silhouette: &part.silhouette,
                x: p.pose.x,
                y: p.pose.y,
                sin_t: s,
                cos_t: c,
                texture: &p.texture,
                radius2: r * r,
            }
        })
        .collect();

    let mut image = RgbImage::new(w, h);
    let rows: Vec<Vec<u8>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = vec![0u8; w * 3];
            for x in 0..w {
                let px = Vector2::new(x as f64, y as f64);
                let color = match cam.pixel_to_plane(&px, &scene.plane) {
                    Ok(world) => {
                        let mut c = None;
                        for inst in &instances {
                            let dx = world.x - inst.x;
                            let dy = world.y - inst.y;
                            if dx * dx + dy * dy > inst.radius2 {
                                continue;
                            }
                            // Into the part frame: rotate by -theta.
                            let lx = inst.cos_t * dx + inst.sin_t * dy;
                            let ly = -inst.sin_t * dx + inst.cos_t * dy;
                            if polygon::contains(inst.silhouette, [lx, ly]) {
                                c = Some(inst.texture.sample(lx, ly));
                                break;
                            }
                        }
                        c.unwrap_or_else(|| scene.plane_texture.sample(world.x, world.y))
                    }
                    Err(_) => [0, 0, 0],
                };
                row[x * 3..x * 3 + 3].copy_from_slice(&color);
            }
            row
        })
        .collect();
    for (y, row) in rows.into_iter().enumerate() {
        image.data_mut()[y * w * 3..(y + 1) * w * 3].copy_from_slice(&row);
    }

    // Labels from projected silhouette vertices.
    let mut detections = Vec::with_capacity(scene.placements.len());
    let mut orientations = Vec::with_capacity(scene.placements.len());
    for p in &scene.placements {
        let part = part_for(p.pose.class_id);
        let poly = part.world_silhouette(&p.pose);
        let (mut u0, mut v0, mut u1, mut v1) =
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for [wx, wy] in &poly {
            if let Ok(px) = cam.project(&Vector3::new(*wx, *wy, scene.plane.z)) {
                u0 = u0.min(px.x);
                v0 = v0.min(px.y);
                u1 = u1.max(px.x);
                v1 = v1.max(px.y);
            }
        }
        // Clamp to the image rectangle (continuous pixel span).
        u0 = u0.max(-0.5);
        v0 = v0.max(-0.5);
        u1 = u1.min(w as f64 - 0.5);
        v1 = v1.min(h as f64 - 0.5);
        detections.push(BoxLabel {
            class_id: p.pose.class_id,
            cx: px_to_norm((u0 + u1) / 2.0, w),
            cy: px_to_norm((v0 + v1) / 2.0, h),
            w: (u1 - u0) / w as f64,
            h: (v1 - v0) / h as f64,
        });
        orientations.push(p.pose.theta);
    }

    LabeledImage {
        image,
        detections,
        orientations,
    }
}

const STREAM_JITTER: u64 = 11;
const STREAM_BLUR: u64 = 12;
const STREAM_NOISE: u64 = 13;

/// Photometric jitter, optional box blur, then additive Gaussian noise,
/// each sampled from the seed; output clamped to [0, 255]. Zero-width
/// ranges at identity values reproduce the input bit-exactly.
pub fn postprocess(image: &RgbImage, noise: &NoiseParams, seed: u64) -> RgbImage {
    let mut jr = rng::stream(seed, STREAM_JITTER);
    let contrast = sample_range(&mut jr, noise.contrast);
    let brightness = sample_range(&mut jr, noise.brightness);

    let mut out = image.clone();
    if contrast != 1.0 || brightness != 0.0 {
        for v in out.data_mut() {
            let f = (*v as f64 - 128.0) * contrast + 128.0 + brightness;
            *v = f.round().clamp(0.0, 255.0) as u8;
        }
    }

    let mut br = rng::stream(seed, STREAM_BLUR);
    let coin: f64 = br.gen_range(0.0..1.0);
    if coin < noise.blur_prob && noise.blur_kernel >= 3 {
        out = box_blur(&out, noise.blur_kernel);
    }

    let mut nr = rng::stream(seed, STREAM_NOISE);
    let sigma = sample_range(&mut nr, noise.gauss_sigma);
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("sigma > 0");
        for v in out.data_mut() {
            let f = *v as f64 + normal.sample(&mut nr);
            *v = f.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

fn sample_range(r: &mut rng::Rng, range: (f64, f64)) -> f64 {
    if range.0 < range.1 {
        r.gen_range(range.0..range.1)
    } else {
        range.0
    }
}

/// Box blur with edge clamping; `kernel` must be odd.
fn box_blur(image: &RgbImage, kernel: usize) -> RgbImage {
    let (w, h) = (image.width(), image.height());
    let half = (kernel / 2) as i64;
    let norm = (kernel * kernel) as f64;
    let mut out = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0f64; 3];
            for dy in -half..=half {
                for dx in -half..=half {
                    let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    let p = image.get(sx, sy);
                    for c in 0..3 {
                        acc[c] += p[c] as f64;
                    }
                }
            }
            out.set(
                x,
                y,
                [
                    (acc[0] / norm).round().clamp(0.0, 255.0) as u8,
                    (acc[1] / norm).round().clamp(0.0, 255.0) as u8,
                    (acc[2] / norm).round().clamp(0.0, 255.0) as u8,
                ],
            );
        }
    }
    out
}
