//! Pipeline configuration: a flat dotted-key text format, the typed
//! config structs assembled from it, and the bundled desk-scale default.
//!
//! Format: one `key = value` per line, `#` starts a comment, values are
//! numbers, names, or comma-separated lists. Unknown keys are rejected.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nnet::TrainConfig;
use crate::render::{
    CameraRanges, DomainConfig, NoiseParams, PartSpec, RandomizationConfig, TextureFamily,
    TextureKind,
};
use crate::rng;

/// The two rendering domains: wild randomization for training, and the
/// narrow held-out domain standing in for real photographs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Synthetic,
    PseudoReal,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Synthetic => "synthetic",
            Domain::PseudoReal => "pseudo_real",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DetectSettings {
    pub grid: usize,
    /// Detector input side; rendered frames are downscaled to this before
    /// the network (boxes are normalized, so no position information is
    /// lost).
    pub input_size: usize,
    /// Dihedral train-time augmentation variants (1, 2, 4 or 8).
    pub augment: usize,
    pub train_scenes: usize,
    pub valid_scenes: usize,
    pub pseudo_real_train_scenes: usize,
    pub pseudo_real_valid_scenes: usize,
    pub conf_threshold: f64,
    pub nms_iou: f64,
    pub train: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct OrientSettings {
    pub side: usize,
    pub rotations: usize,
    pub synthetic_bases: usize,
    /// Pseudo-real base crops per class; the last two are held out
    /// (one validation, one test).
    pub pseudo_real_bases: usize,
    pub train: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct MatchSettings {
    pub step_deg: f64,
    pub window_deg: f64,
}

#[derive(Debug, Clone)]
pub struct BenchSettings {
    pub trials_per_class: usize,
    pub eps_pos: f64,
    pub eps_ang_deg: f64,
    pub eps_ang_per_class: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub seed: u64,
    pub parts: Vec<PartSpec>,
    pub camera: CameraRanges,
    pub plane_z: f64,
    pub region_half: f64,
    pub min_separation: f64,
    pub min_center_dist: f64,
    pub max_attempts: usize,
    pub synthetic: DomainConfig,
    pub pseudo_real: DomainConfig,
    pub detect: DetectSettings,
    pub orient: OrientSettings,
    pub matching: MatchSettings,
    pub bench: BenchSettings,
    /// FNV-1a hash of the canonicalized key/value text.
    pub hash: u64,
}

impl PipelineConfig {
    pub fn n_classes(&self) -> usize {
        self.parts.len()
    }

    /// Scene randomization for one domain.
    pub fn randomization(&self, domain: Domain) -> RandomizationConfig {
        let dc = match domain {
            Domain::Synthetic => self.synthetic.clone(),
            Domain::PseudoReal => self.pseudo_real.clone(),
        };
        RandomizationConfig {
            parts: self.parts.clone(),
            region_half: self.region_half,
            min_separation: self.min_separation,
            min_center_dist: self.min_center_dist,
            camera: self.camera.clone(),
            plane_z: self.plane_z,
            domain: dc,
            max_attempts: self.max_attempts,
        }
    }

    /// Per-stage seeds derived from the master seed.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in stage.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        rng::derive(self.seed, h)
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash)
    }
}

/// FNV-1a over the canonicalized (sorted, trimmed) key=value lines.
pub fn config_hash(pairs: &BTreeMap<String, String>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (k, v) in pairs {
        for b in k.bytes().chain("=".bytes()).chain(v.bytes()).chain("\n".bytes()) {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
    }
    h
}

/// Parse the raw text into a key/value map; later duplicates win.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (num, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::InvalidConfig(format!(
                "line {}: expected `key = value`, got {raw:?}",
                num + 1
            )));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

struct Reader {
    pairs: BTreeMap<String, String>,
    used: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl Reader {
    fn new(pairs: BTreeMap<String, String>) -> Self {
        Self {
            pairs,
            used: Default::default(),
        }
    }

    fn raw(&self, key: &str) -> Result<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.pairs
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::InvalidConfig(format!("missing config key {key}")))
    }

    fn f64(&self, key: &str) -> Result<f64> {
        self.raw(key)?
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad number for {key}")))
    }

    fn usize(&self, key: &str) -> Result<usize> {
        self.raw(key)?
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad integer for {key}")))
    }

    fn u64(&self, key: &str) -> Result<u64> {
        self.raw(key)?
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad integer for {key}")))
    }

    fn list_f64(&self, key: &str) -> Result<Vec<f64>> {
        self.raw(key)?
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad list number in {key}")))
            })
            .collect()
    }

    fn pair_f64(&self, key: &str) -> Result<(f64, f64)> {
        let v = self.list_f64(key)?;
        if v.len() != 2 {
            return Err(Error::InvalidConfig(format!("{key} needs two numbers")));
        }
        Ok((v[0], v[1]))
    }

    fn rgb(&self, key: &str) -> Result<[u8; 3]> {
        let v = self.list_f64(key)?;
        if v.len() != 3 || v.iter().any(|&x| !(0.0..=255.0).contains(&x)) {
            return Err(Error::InvalidConfig(format!("{key} needs three 0..255 values")));
        }
        Ok([v[0] as u8, v[1] as u8, v[2] as u8])
    }

    fn unknown_keys(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.pairs
            .keys()
            .filter(|k| !used.contains(*k))
            .cloned()
            .collect()
    }
}

fn texture_family(r: &Reader, prefix: &str) -> Result<TextureFamily> {
    let kinds = r
        .raw(&format!("{prefix}.kinds"))?
        .split(',')
        .map(|s| TextureKind::parse(s.trim()))
        .collect::<Result<Vec<_>>>()?;
    let orient = r.pair_f64(&format!("{prefix}.orientation_deg"))?;
    Ok(TextureFamily {
        kinds,
        color_a: (
            r.rgb(&format!("{prefix}.color_a_min"))?,
            r.rgb(&format!("{prefix}.color_a_max"))?,
        ),
        color_b: (
            r.rgb(&format!("{prefix}.color_b_min"))?,
            r.rgb(&format!("{prefix}.color_b_max"))?,
        ),
        scale: r.pair_f64(&format!("{prefix}.scale"))?,
        orientation: (orient.0.to_radians(), orient.1.to_radians()),
    })
}

fn noise_params(r: &Reader, prefix: &str) -> Result<NoiseParams> {
    Ok(NoiseParams {
        gauss_sigma: r.pair_f64(&format!("{prefix}.sigma"))?,
        brightness: r.pair_f64(&format!("{prefix}.brightness"))?,
        contrast: r.pair_f64(&format!("{prefix}.contrast"))?,
        blur_prob: r.f64(&format!("{prefix}.blur_prob"))?,
        blur_kernel: r.usize(&format!("{prefix}.blur_kernel"))?,
    })
}

fn domain_config(r: &Reader, domain: &str) -> Result<DomainConfig> {
    Ok(DomainConfig {
        plane_texture: texture_family(r, &format!("{domain}.plane"))?,
        part_texture: texture_family(r, &format!("{domain}.part"))?,
        noise: noise_params(r, &format!("{domain}.noise"))?,
    })
}

fn train_config(r: &Reader, prefix: &str, seed: u64) -> Result<TrainConfig> {
    let cfg = TrainConfig {
        learning_rate: r.f64(&format!("{prefix}.lr"))?,
        batch_size: r.usize(&format!("{prefix}.batch"))?,
        max_epochs: r.usize(&format!("{prefix}.epochs"))?,
        patience: r.usize(&format!("{prefix}.patience"))?,
        seed,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse(text: &str) -> Result<PipelineConfig> {
    let pairs = parse_pairs(text)?;
    let hash = config_hash(&pairs);
    let r = Reader::new(pairs);

    let seed = r.u64("seed")?;
    let n_classes = r.usize("classes")?;
    let mut parts = Vec::with_capacity(n_classes);
    for class_id in 0..n_classes {
        let p = format!("part.{class_id}");
        let name = r.raw(&format!("{p}.name"))?.to_string();
        let flat = r.list_f64(&format!("{p}.silhouette"))?;
        if flat.len() < 6 || flat.len() % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "{p}.silhouette needs an even list of >= 6 coordinates"
            )));
        }
        let silhouette: Vec<[f64; 2]> = flat.chunks(2).map(|c| [c[0], c[1]]).collect();
        let offset = r.pair_f64(&format!("{p}.grasp_offset"))?;
        let angle = r.f64(&format!("{p}.grasp_angle_deg"))?.to_radians();
        let symmetry = r.usize(&format!("{p}.symmetry"))?;
        parts.push(PartSpec::new(
            class_id,
            name,
            silhouette,
            [offset.0, offset.1],
            angle,
            symmetry,
        )?);
    }

    let camera = CameraRanges {
        fx: r.f64("camera.fx")?,
        fy: r.f64("camera.fy")?,
        cx: r.f64("camera.cx")?,
        cy: r.f64("camera.cy")?,
        width: r.usize("camera.width")?,
        height: r.usize("camera.height")?,
        height_range: (r.f64("camera.height_min")?, r.f64("camera.height_max")?),
        xy_jitter: r.f64("camera.xy_jitter")?,
        tilt_max: r.f64("camera.tilt_max_deg")?.to_radians(),
    };

    let mut eps_ang_per_class = BTreeMap::new();
    for class_id in 0..n_classes {
        let key = format!("bench.eps_ang_deg.{class_id}");
        if r.pairs.contains_key(&key) {
            eps_ang_per_class.insert(class_id, r.f64(&key)?);
        }
    }

    let seed_for = |stage: &str| -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in stage.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        rng::derive(seed, h)
    };

    let config = PipelineConfig {
        seed,
        parts,
        camera,
        plane_z: r.f64("camera.plane_z")?,
        region_half: r.f64("scene.region_half")?,
        min_separation: r.f64("scene.min_separation")?,
        min_center_dist: r.f64("scene.min_center_dist")?,
        max_attempts: r.usize("scene.max_attempts")?,
        synthetic: domain_config(&r, "synthetic")?,
        pseudo_real: domain_config(&r, "pseudo_real")?,
        detect: DetectSettings {
            grid: r.usize("detect.grid")?,
            input_size: r.usize("detect.input_size")?,
            augment: r.usize("detect.augment")?,
            train_scenes: r.usize("detect.train_scenes")?,
            valid_scenes: r.usize("detect.valid_scenes")?,
            pseudo_real_train_scenes: r.usize("detect.pseudo_real_train_scenes")?,
            pseudo_real_valid_scenes: r.usize("detect.pseudo_real_valid_scenes")?,
            conf_threshold: r.f64("detect.conf_threshold")?,
            nms_iou: r.f64("detect.nms_iou")?,
            train: train_config(&r, "detect", seed_for("detect"))?,
        },
        orient: OrientSettings {
            side: r.usize("orient.side")?,
            rotations: r.usize("orient.rotations")?,
            synthetic_bases: r.usize("orient.synthetic_bases")?,
            pseudo_real_bases: r.usize("orient.pseudo_real_bases")?,
            train: train_config(&r, "orient", seed_for("orient"))?,
        },
        matching: MatchSettings {
            step_deg: r.f64("match.step_deg")?,
            window_deg: r.f64("match.window_deg")?,
        },
        bench: BenchSettings {
            trials_per_class: r.usize("bench.trials_per_class")?,
            eps_pos: r.f64("bench.eps_pos")?,
            eps_ang_deg: r.f64("bench.eps_ang_deg")?,
            eps_ang_per_class,
        },
        hash,
    };

    let unknown = r.unknown_keys();
    if !unknown.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "unknown config keys: {}",
            unknown.join(", ")
        )));
    }
    if !matches!(config.detect.augment, 1 | 2 | 4 | 8) {
        return Err(Error::InvalidConfig(
            "detect.augment must be 1, 2, 4 or 8".into(),
        ));
    }
    if config.orient.pseudo_real_bases < 3 {
        return Err(Error::InvalidConfig(
            "orient.pseudo_real_bases must be >= 3 (2 are held out for valid/test)".into(),
        ));
    }
    Ok(config)
}

/// The bundled desk-scale configuration (also shipped at configs/desk.cfg).
pub const DESK_CONFIG: &str = include_str!("desk.cfg");

pub fn desk_default() -> PipelineConfig {
    parse(DESK_CONFIG).expect("bundled config parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_parses() {
        let cfg = desk_default();
        assert_eq!(cfg.parts.len(), 3);
        assert_eq!(cfg.detect.grid, 8);
        assert_eq!(cfg.orient.rotations, 360);
        assert_eq!(cfg.parts[1].symmetry_order, 2);
        // Input size is grid-compatible.
        assert_eq!(cfg.camera.width % cfg.detect.grid, 0);
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a = parse(DESK_CONFIG).unwrap();
        let b = parse(DESK_CONFIG).unwrap();
        assert_eq!(a.hash, b.hash);
        let altered = DESK_CONFIG.replace("seed = 42", "seed = 43");
        let c = parse(&altered).unwrap();
        assert_ne!(a.hash, c.hash);
        // Comments and blank lines do not change the hash.
        let commented = format!("# leading comment\n\n{DESK_CONFIG}");
        let d = parse(&commented).unwrap();
        assert_eq!(a.hash, d.hash);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = format!("{DESK_CONFIG}\nnot.a.key = 1\n");
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().contains("not.a.key"));
    }

    #[test]
    fn missing_key_is_rejected() {
        let text = DESK_CONFIG.replace("detect.grid = 8", "");
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().contains("detect.grid"));
    }
}
