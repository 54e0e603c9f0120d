//! Domain-randomized scene sampling: poses, textures and camera drawn
//! from configured ranges, with rejection sampling for part separation
//! and in-frame visibility.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::geometry::{look_down_extrinsics, CameraModel, SupportPlane};
use crate::rng;

use super::part::{PartSpec, Pose};
use super::polygon;
use super::texture::{randomize_texture, Texture, TextureFamily};

/// Fixed intrinsics plus the pose distribution the camera is drawn from.
#[derive(Debug, Clone)]
pub struct CameraRanges {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub height_range: (f64, f64),
    /// Camera x/y drawn from +-xy_jitter around the plane origin.
    pub xy_jitter: f64,
    /// Tilt about world x/y drawn from +-tilt_max (radians).
    pub tilt_max: f64,
}

/// One rendering domain: texture families plus post-processing noise.
#[derive(Debug, Clone)]
pub struct DomainConfig {
    pub plane_texture: TextureFamily,
    pub part_texture: TextureFamily,
    pub noise: NoiseParams,
}

#[derive(Debug, Clone)]
pub struct NoiseParams {
    pub gauss_sigma: (f64, f64),
    /// Additive brightness jitter on [0,255] values.
    pub brightness: (f64, f64),
    /// Multiplicative contrast jitter about mid-gray.
    pub contrast: (f64, f64),
    pub blur_prob: f64,
    /// Box blur kernel side (odd).
    pub blur_kernel: usize,
}

impl NoiseParams {
    pub fn none() -> Self {
        Self {
            gauss_sigma: (0.0, 0.0),
            brightness: (0.0, 0.0),
            contrast: (1.0, 1.0),
            blur_prob: 0.0,
            blur_kernel: 3,
        }
    }
}

/// Everything scene sampling needs for one domain.
#[derive(Debug, Clone)]
pub struct RandomizationConfig {
    pub parts: Vec<PartSpec>,
    /// Placement region: |x|,|y| <= region_half on the plane.
    pub region_half: f64,
    /// Minimum silhouette separation in meters.
    pub min_separation: f64,
    /// Minimum Chebyshev (L-inf) distance between part centers in meters;
    /// keeps every pair of box centers in distinct detector grid cells.
    pub min_center_dist: f64,
    pub camera: CameraRanges,
    pub plane_z: f64,
    pub domain: DomainConfig,
    pub max_attempts: usize,
}

/// A placed part instance with its appearance.
#[derive(Debug, Clone)]
pub struct Placement {
    pub pose: Pose,
    pub texture: Texture,
}

#[derive(Debug, Clone)]
pub struct SceneInstance {
    pub placements: Vec<Placement>,
    pub plane_texture: Texture,
    pub camera: CameraModel<f64>,
    pub plane: SupportPlane<f64>,
    pub seed: u64,
}

const STREAM_CAMERA: u64 = 1;
const STREAM_PLANE_TEX: u64 = 2;
const STREAM_PLACE: u64 = 3;

/// Deterministic function of (config, seed). Draws a camera pose, a plane
/// texture, and one pose+texture per part class, rejecting placements that
/// overlap (closer than `min_separation`) or project outside the image.
pub fn sample_scene(config: &RandomizationConfig, seed: u64) -> Result<SceneInstance> {
    if config.parts.is_empty() {
        return Err(Error::InvalidConfig("no part classes configured".into()));
    }

    let mut cam_rng = rng::stream(seed, STREAM_CAMERA);
    let cr = &config.camera;
    let height = sample_range(&mut cam_rng, cr.height_range);
    let cam_x = sample_sym(&mut cam_rng, cr.xy_jitter);
    let cam_y = sample_sym(&mut cam_rng, cr.xy_jitter);
    let tilt_x = sample_sym(&mut cam_rng, cr.tilt_max);
    let tilt_y = sample_sym(&mut cam_rng, cr.tilt_max);
    let extrinsics =
        look_down_extrinsics(cam_x, cam_y, config.plane_z + height, tilt_x, tilt_y);
    let camera = CameraModel::new(cr.fx, cr.fy, cr.cx, cr.cy, cr.width, cr.height, extrinsics)?;
    let plane = SupportPlane::new(config.plane_z);

    let plane_texture = randomize_texture(
        &config.domain.plane_texture,
        rng::derive(seed, STREAM_PLANE_TEX),
    )?;

    let mut placements: Vec<Placement> = Vec::with_capacity(config.parts.len());
    let mut world_polys: Vec<Vec<[f64; 2]>> = Vec::with_capacity(config.parts.len());
    let mut place_rng = rng::stream(seed, STREAM_PLACE);

    for part in &config.parts {
        let mut accepted = false;
        for _attempt in 0..config.max_attempts {
            let x = sample_sym(&mut place_rng, config.region_half);
            let y = sample_sym(&mut place_rng, config.region_half);
            let theta = place_rng.gen_range(0.0..std::f64::consts::TAU);
            let pose = Pose::new(x, y, theta, part.class_id);
            let poly = part.world_silhouette(&pose);

            if !fully_in_frame(&camera, &plane, &poly) {
                continue;
            }
            let separated = world_polys
                .iter()
                .all(|other| polygon::polygon_distance(&poly, other) >= config.min_separation);
            if !separated {
                continue;
            }
            let centers_apart = placements.iter().all(|p| {
                (p.pose.x - x).abs().max((p.pose.y - y).abs()) >= config.min_center_dist
            });
            if !centers_apart {
                continue;
            }

            let tex_seed = rng::derive(seed, 0x100 + part.class_id as u64);
            let texture = randomize_texture(&config.domain.part_texture, tex_seed)?;
            placements.push(Placement { pose, texture });
            world_polys.push(poly);
            accepted = true;
            break;
        }
        if !accepted {
            return Err(Error::PlacementTooCrowded {
                attempts: config.max_attempts,
            });
        }
    }

    Ok(SceneInstance {
        placements,
        plane_texture,
        camera,
        plane,
        seed,
    })
}

/// All polygon vertices project inside the outermost pixel centers.
fn fully_in_frame(
    camera: &CameraModel<f64>,
    plane: &SupportPlane<f64>,
    poly: &[[f64; 2]],
) -> bool {
    let w = camera.width as f64;
    let h = camera.height as f64;
    poly.iter().all(|[x, y]| {
        match camera.project(&nalgebra::Vector3::new(*x, *y, plane.z)) {
            Ok(px) => px.x >= 0.0 && px.x <= w - 1.0 && px.y >= 0.0 && px.y <= h - 1.0,
            Err(_) => false,
        }
    })
}

fn sample_range(r: &mut rng::Rng, range: (f64, f64)) -> f64 {
    if range.0 < range.1 {
        r.gen_range(range.0..range.1)
    } else {
        range.0
    }
}

fn sample_sym(r: &mut rng::Rng, half: f64) -> f64 {
    if half > 0.0 {
        r.gen_range(-half..half)
    } else {
        0.0
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::render::part::notched_rect;
    use crate::render::texture::TextureKind;

    pub fn test_config(region_half: f64) -> RandomizationConfig {
        let parts = vec![
            PartSpec::new(
                0,
                "a",
                notched_rect(0.036, 0.024, 0.010, 0.008, 0.012),
                [0.0, 0.0],
                0.0,
                1,
            )
            .unwrap(),
            PartSpec::new(
                1,
                "b",
                notched_rect(0.042, 0.014, 0.030, 0.005, 0.010),
                [0.0, 0.0],
                0.0,
                2,
            )
            .unwrap(),
            PartSpec::new(
                2,
                "c",
                notched_rect(0.030, 0.030, 0.000, 0.008, 0.012),
                [0.0, 0.0],
                0.0,
                1,
            )
            .unwrap(),
        ];
        let family = TextureFamily {
            kinds: vec![
                TextureKind::Solid,
                TextureKind::Checker,
                TextureKind::Noise,
                TextureKind::Gradient,
            ],
            color_a: ([0, 0, 0], [255, 255, 255]),
            color_b: ([0, 0, 0], [255, 255, 255]),
            scale: (0.01, 0.05),
            orientation: (0.0, std::f64::consts::TAU),
        };
        RandomizationConfig {
            parts,
            region_half,
            min_separation: 0.01,
            min_center_dist: 0.085,
            camera: CameraRanges {
                fx: 200.0,
                fy: 200.0,
                cx: 63.5,
                cy: 63.5,
                width: 128,
                height: 128,
                height_range: (0.65, 0.95),
                xy_jitter: 0.01,
                tilt_max: 0.03,
            },
            plane_z: 0.0,
            domain: DomainConfig {
                plane_texture: family.clone(),
                part_texture: family,
                noise: NoiseParams::none(),
            },
            max_attempts: 1000,
        }
    }

    #[test]
    fn same_seed_gives_identical_scene() {
        let cfg = test_config(0.11);
        let a = sample_scene(&cfg, 77).unwrap();
        let b = sample_scene(&cfg, 77).unwrap();
        assert_eq!(a.placements.len(), b.placements.len());
        for (pa, pb) in a.placements.iter().zip(&b.placements) {
            assert_eq!(pa.pose, pb.pose);
            assert_eq!(pa.texture, pb.texture);
        }
        assert_eq!(a.plane_texture, b.plane_texture);
        assert_eq!(a.camera.extrinsics, b.camera.extrinsics);
    }

    #[test]
    fn three_classes_three_separated_placements() {
        let cfg = test_config(0.11);
        for seed in 0..20 {
            let scene = sample_scene(&cfg, seed).unwrap();
            assert_eq!(scene.placements.len(), 3);
            for i in 0..3 {
                for j in i + 1..3 {
                    let a = cfg.parts[i].world_silhouette(&scene.placements[i].pose);
                    let b = cfg.parts[j].world_silhouette(&scene.placements[j].pose);
                    assert!(!polygon::polygons_overlap(&a, &b), "seed {seed}");
                }
            }
        }
    }

    #[test]
    fn crowded_region_errors() {
        let mut cfg = test_config(0.002);
        cfg.max_attempts = 50;
        // Region much smaller than one part: the second part can never fit.
        let err = sample_scene(&cfg, 1).unwrap_err();
        assert!(matches!(err, Error::PlacementTooCrowded { .. }));
    }
}
