//! End-to-end orchestration behind the CLI commands: dataset generation,
//! detector and orientation training, kernel-bank construction, metric
//! evaluation and the grasp benchmark, with artifact paths and sidecar
//! metadata in one place.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{Domain, PipelineConfig};
use crate::crop::{standardize, BBox};
use crate::detect::{
    build_detector, detect_image, map50, DetectorDataset, Detection,
};
use crate::error::{Error, Result};
use crate::geometry::{look_down_extrinsics, CameraModel, SupportPlane};
use crate::grasp::{run_benchmark, BenchmarkTable, PipelineModels, Tolerances, Variant};
use crate::img::RgbImage;
use crate::matching::{save_bank, KernelBank};
use crate::nnet::{self, Network, TrainHistory};
use crate::orient::{
    build_orientation_net, evaluate_errors, median, OrientDataset,
};
use crate::render::{
    generate_dataset, load_dataset_index, load_orient_samples, rasterize, EmitOptions,
    NoiseParams, OrientSample, Placement, PartSpec, Pose, SceneInstance,
    Texture, TextureFamily,
};
use crate::rng;

/// Artifact layout under one output directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dataset_dir(&self, name: &str) -> PathBuf {
        self.root.join("datasets").join(name)
    }

    pub fn detect_dataset(&self, domain: Domain, split: &str) -> PathBuf {
        self.dataset_dir(&format!("detect_{}_{}", split, domain.name()))
    }

    pub fn orient_dataset(&self, domain: Domain, class_id: usize) -> PathBuf {
        self.dataset_dir(&format!("orient_{}_{class_id}", domain.name()))
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn detector_model(&self) -> PathBuf {
        self.models_dir().join("detector.mogpe")
    }

    pub fn orient_model(&self, class_id: usize) -> PathBuf {
        self.models_dir().join(format!("orient_{class_id}.mogpe"))
    }

    pub fn bank_file(&self, class_id: usize) -> PathBuf {
        self.models_dir().join(format!("bank_{class_id}.mogpe-bank"))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn visualize_dir(&self) -> PathBuf {
        self.root.join("visualize")
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Sidecar metadata next to binary artifacts (the model format itself is
/// fixed, so provenance lives in `<artifact>.meta`).
pub fn write_meta(artifact: &Path, config: &PipelineConfig, extra: &[(&str, String)]) -> Result<()> {
    let mut text = format!("config_hash = {}\nseed = {}\n", config.hash_hex(), config.seed);
    for (k, v) in extra {
        text.push_str(&format!("{k} = {v}\n"));
    }
    write_text(&artifact.with_extension(format!(
        "{}.meta",
        artifact.extension().and_then(|e| e.to_str()).unwrap_or("bin")
    )), &text)
}

/// Returns a warning when the artifact's recorded config hash differs from
/// the current config.
pub fn check_meta(artifact: &Path, config: &PipelineConfig) -> Option<String> {
    let meta_path = artifact.with_extension(format!(
        "{}.meta",
        artifact.extension().and_then(|e| e.to_str()).unwrap_or("bin")
    ));
    let text = fs::read_to_string(&meta_path).ok()?;
    let recorded = text
        .lines()
        .find_map(|l| l.strip_prefix("config_hash = "))?
        .trim()
        .to_string();
    if recorded != config.hash_hex() {
        Some(format!(
            "{}: built with config {} but current config is {}",
            artifact.display(),
            recorded,
            config.hash_hex()
        ))
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

/// Generate every dataset the pipeline trains and evaluates on.
pub fn cmd_generate(config: &PipelineConfig, ws: &Workspace) -> Result<()> {
    let opts = |orient: bool| EmitOptions {
        orient_crop_side: orient.then_some(config.orient.side),
        config_hash: config.hash,
    };

    // Detection splits.
    let jobs: [(Domain, &str, usize); 4] = [
        (Domain::Synthetic, "train", config.detect.train_scenes),
        (Domain::Synthetic, "valid", config.detect.valid_scenes),
        (Domain::PseudoReal, "train", config.detect.pseudo_real_train_scenes),
        (Domain::PseudoReal, "valid", config.detect.pseudo_real_valid_scenes),
    ];
    for (domain, split, n) in jobs {
        let rc = config.randomization(domain);
        let seed = config.stage_seed(&format!("gen_{}_{}", domain.name(), split));
        generate_dataset(&rc, n, seed, &ws.detect_dataset(domain, split), &opts(false))?;
    }

    // Orientation base renders: one single-part scene per base image.
    for part in &config.parts {
        for (domain, bases) in [
            (Domain::Synthetic, config.orient.synthetic_bases),
            (Domain::PseudoReal, config.orient.pseudo_real_bases),
        ] {
            let mut rc = config.randomization(domain);
            rc.parts = vec![part.clone()];
            let seed = config.stage_seed(&format!("orient_{}_{}", domain.name(), part.class_id));
            generate_dataset(
                &rc,
                bases,
                seed,
                &ws.orient_dataset(domain, part.class_id),
                &opts(true),
            )?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// detector training / evaluation
// ---------------------------------------------------------------------------

fn load_detector_split(config: &PipelineConfig, dir: &Path, data: &mut DetectorDataset) -> Result<usize> {
    let index = load_dataset_index(dir).map_err(|e| match e {
        Error::Io { path, .. } => Error::Prerequisite(format!(
            "dataset missing at {path}; run `mogpe generate` first"
        )),
        other => other,
    })?;
    let n = index.len();
    for sample in index {
        let image = RgbImage::load_png(&sample.image_path)?;
        let scaled = crate::crop::resize(&image, config.detect.input_size)?;
        data.push(&scaled, &sample.labels)?;
    }
    let _ = config;
    Ok(n)
}

pub struct DetectTrainOutcome {
    pub network: Network<f32>,
    pub history: TrainHistory,
    pub composed_len: usize,
}

/// Train the grid detector on synthetic + weight-multiplied pseudo-real
/// scenes, early-stopping on the held-out synthetic split.
pub fn train_detector(config: &PipelineConfig, ws: &Workspace) -> Result<DetectTrainOutcome> {
    let side = config.detect.input_size;
    let mut train_data = DetectorDataset::new(
        side,
        side,
        config.detect.grid,
        config.n_classes(),
        config.detect.augment,
    );
    let n_syn = load_detector_split(
        config,
        &ws.detect_dataset(Domain::Synthetic, "train"),
        &mut train_data,
    )?;
    if n_syn == 0 {
        return Err(Error::EmptyDataset);
    }
    load_detector_split(
        config,
        &ws.detect_dataset(Domain::PseudoReal, "train"),
        &mut train_data,
    )?;
    train_data.apply_weighting(n_syn);

    let mut valid_data = DetectorDataset::new(side, side, config.detect.grid, config.n_classes(), 1);
    load_detector_split(
        config,
        &ws.detect_dataset(Domain::Synthetic, "valid"),
        &mut valid_data,
    )?;

    let spec = build_detector(config.detect.grid, config.n_classes(), side)?;
    let mut net = Network::<f32>::init(spec, config.stage_seed("detector_init"));
    let history = nnet::train(&mut net, &train_data, &valid_data, &config.detect.train)?;

    fs::create_dir_all(ws.models_dir())
        .map_err(|e| Error::io(ws.models_dir().display().to_string(), e))?;
    nnet::save_model(&net, &ws.detector_model())?;
    write_meta(
        &ws.detector_model(),
        config,
        &[
            ("stage", "detector".into()),
            ("grid", config.detect.grid.to_string()),
            ("classes", config.n_classes().to_string()),
            ("input", side.to_string()),
        ],
    )?;

    let mut hist = String::from("epoch,train_loss,valid_loss\n");
    for (i, e) in history.epochs.iter().enumerate() {
        hist.push_str(&format!("{i},{:.8},{:.8}\n", e.train_loss, e.valid_loss));
    }
    write_text(&ws.reports_dir().join("detect_train_history.csv"), &hist)?;

    Ok(DetectTrainOutcome {
        network: net,
        history,
        composed_len: train_data.composed_len(),
    })
}

/// Detector predictions for every image in a dataset directory.
pub fn detect_on_dataset(
    config: &PipelineConfig,
    net: &Network<f32>,
    dir: &Path,
) -> Result<(Vec<Vec<Detection>>, Vec<Vec<crate::render::BoxLabel>>)> {
    use rayon::prelude::*;
    let index = load_dataset_index(dir)?;
    let preds: Vec<Result<Vec<Detection>>> = index
        .par_iter()
        .map(|s| {
            let image = RgbImage::load_png(&s.image_path)?;
            let scaled = crate::crop::resize(&image, config.detect.input_size)?;
            detect_image(net, &scaled, config.detect.conf_threshold, config.detect.nms_iou)
        })
        .collect();
    let mut predictions = Vec::with_capacity(index.len());
    for p in preds {
        predictions.push(p?);
    }
    let gts = index.into_iter().map(|s| s.labels).collect();
    Ok((predictions, gts))
}

/// mAP50 of the saved detector over a dataset directory.
pub fn eval_detector(
    config: &PipelineConfig,
    net: &Network<f32>,
    dir: &Path,
) -> Result<(BTreeMap<usize, f64>, f64)> {
    let (preds, gts) = detect_on_dataset(config, net, dir)?;
    Ok(map50(&preds, &gts))
}

/// Write the offline predictions file: `image_id class conf cx cy w h`.
pub fn write_predictions(preds: &[Vec<Detection>], path: &Path) -> Result<()> {
    let mut text = String::new();
    for (image_id, dets) in preds.iter().enumerate() {
        for d in dets {
            text.push_str(&format!(
                "{image_id} {} {:.6} {:.6} {:.6} {:.6} {:.6}\n",
                d.class_id, d.confidence, d.cx, d.cy, d.w, d.h
            ));
        }
    }
    write_text(path, &text)
}

// ---------------------------------------------------------------------------
// orientation training / kernel banks
// ---------------------------------------------------------------------------

pub struct OrientSets {
    pub train: OrientDataset,
    pub valid: OrientDataset,
    pub test: OrientDataset,
}

/// Assemble the per-class sets: all synthetic bases plus all but the last
/// two pseudo-real bases are rotation-augmented into the training set; the
/// last two become the validation and test sets.
pub fn build_orient_sets(
    synthetic: &[OrientSample],
    pseudo_real: &[OrientSample],
    rotations: usize,
    side: usize,
) -> Result<OrientSets> {
    if pseudo_real.len() < 3 {
        return Err(Error::InvalidConfig(
            "need >= 3 pseudo-real bases (2 are held out)".into(),
        ));
    }
    let mut train = OrientDataset::new(side);
    let mut valid = OrientDataset::new(side);
    let mut test = OrientDataset::new(side);
    for s in synthetic {
        train.push_augmented(&s.image, s.theta_deg.to_radians(), rotations)?;
    }
    let split = pseudo_real.len() - 2;
    for s in &pseudo_real[..split] {
        train.push_augmented(&s.image, s.theta_deg.to_radians(), rotations)?;
    }
    valid.push_augmented(
        &pseudo_real[split].image,
        pseudo_real[split].theta_deg.to_radians(),
        rotations,
    )?;
    test.push_augmented(
        &pseudo_real[split + 1].image,
        pseudo_real[split + 1].theta_deg.to_radians(),
        rotations,
    )?;
    Ok(OrientSets { train, valid, test })
}

pub struct OrientTrainOutcome {
    pub class_id: usize,
    pub network: Network<f32>,
    pub history: TrainHistory,
    /// (dataset name, success rate, median error deg) at k=1.
    pub report: Vec<(String, f64, f64)>,
}

/// Train one class's orientation model, evaluate it, and build its kernel
/// bank.
pub fn train_orientation(
    config: &PipelineConfig,
    ws: &Workspace,
    class_id: usize,
) -> Result<OrientTrainOutcome> {
    let load = |domain: Domain| -> Result<Vec<OrientSample>> {
        let dir = ws.orient_dataset(domain, class_id);
        let samples = load_orient_samples(&dir).map_err(|e| match e {
            Error::Io { path, .. } => Error::Prerequisite(format!(
                "orientation dataset missing at {path}; run `mogpe generate` first"
            )),
            other => other,
        })?;
        Ok(samples)
    };
    let synthetic = load(Domain::Synthetic)?;
    let pseudo_real = load(Domain::PseudoReal)?;
    let sets = build_orient_sets(&synthetic, &pseudo_real, config.orient.rotations, config.orient.side)?;

    let spec = build_orientation_net(3, config.orient.side)?;
    let mut train_cfg = config.orient.train.clone();
    train_cfg.seed = rng::derive(train_cfg.seed, class_id as u64);
    let mut net = Network::<f32>::init(spec, rng::derive(config.stage_seed("orient_init"), class_id as u64));
    let history = nnet::train(&mut net, &sets.train, &sets.valid, &train_cfg)?;

    let part = &config.parts[class_id];
    let mut report = Vec::new();
    for (name, data) in [
        ("train", &sets.train),
        ("valid", &sets.valid),
        ("test", &sets.test),
    ] {
        let errors = evaluate_errors(&net, data, 1)?;
        let rate = errors.iter().filter(|&&e| e < 10.0).count() as f64 / errors.len() as f64;
        let mut errs = errors.clone();
        report.push((name.to_string(), rate, median(&mut errs)));
    }
    let _ = part;

    fs::create_dir_all(ws.models_dir())
        .map_err(|e| Error::io(ws.models_dir().display().to_string(), e))?;
    nnet::save_model(&net, &ws.orient_model(class_id))?;
    write_meta(
        &ws.orient_model(class_id),
        config,
        &[
            ("stage", "orientation".into()),
            ("class", class_id.to_string()),
            ("side", config.orient.side.to_string()),
        ],
    )?;

    let bank = build_class_bank(config, class_id)?;
    save_bank(&bank, &ws.bank_file(class_id))?;
    write_meta(
        &ws.bank_file(class_id),
        config,
        &[
            ("stage", "bank".into()),
            ("class", class_id.to_string()),
            ("step_deg", config.matching.step_deg.to_string()),
        ],
    )?;

    Ok(OrientTrainOutcome {
        class_id,
        network: net,
        history,
        report,
    })
}

/// Noiseless render of the part at the origin pose under a fixed nadir
/// camera in the pseudo-real texture configuration: the one kernel
/// exemplar each class's bank is built from.
pub fn kernel_scene(config: &PipelineConfig, class_id: usize) -> Result<(SceneInstance, PartSpec)> {
    let part = config.parts[class_id].clone();
    let cr = &config.camera;
    let height = (cr.height_range.0 + cr.height_range.1) / 2.0;
    let camera = CameraModel::new(
        cr.fx,
        cr.fy,
        cr.cx,
        cr.cy,
        cr.width,
        cr.height,
        look_down_extrinsics(0.0, 0.0, config.plane_z + height, 0.0, 0.0),
    )?;
    let tex_seed = rng::derive(config.stage_seed("kernel"), class_id as u64);
    let part_texture =
        crate::render::randomize_texture(&config.pseudo_real.part_texture, tex_seed)?;
    let plane_texture =
        crate::render::randomize_texture(&config.pseudo_real.plane_texture, rng::derive(tex_seed, 1))?;
    let scene = SceneInstance {
        placements: vec![Placement {
            pose: Pose::new(0.0, 0.0, 0.0, class_id),
            texture: part_texture,
        }],
        plane_texture,
        camera,
        plane: SupportPlane::new(config.plane_z),
        seed: tex_seed,
    };
    Ok((scene, part))
}

/// Build the kernel bank for a class: render the kernel exemplar, run the
/// standard crop chain on it, and derive the silhouette mask by sending a
/// white-on-black render through the identical chain.
pub fn build_class_bank(config: &PipelineConfig, class_id: usize) -> Result<KernelBank> {
    let (scene, part) = kernel_scene(config, class_id)?;
    let parts = vec![part];
    let labeled = rasterize(&parts, &scene);
    let det = &labeled.detections[0];
    let bbox = BBox::from_normalized(det.cx, det.cy, det.w, det.h);
    let kernel = standardize(&labeled.image, &bbox, config.orient.side)?;

    // Same scene with white part on black plane: the resampled silhouette.
    let mut mask_scene = scene;
    mask_scene.placements[0].texture = Texture::solid([255, 255, 255]);
    mask_scene.plane_texture = Texture::solid([0, 0, 0]);
    let mask_render = rasterize(&parts, &mask_scene);
    let mask_crop = standardize(&mask_render.image, &bbox, config.orient.side)?;
    let mask: Vec<bool> = (0..config.orient.side * config.orient.side)
        .map(|i| {
            let x = i % config.orient.side;
            let y = i / config.orient.side;
            mask_crop.luma(x, y) > 127.0
        })
        .collect();
    KernelBank::build(class_id, &kernel, &mask, config.matching.step_deg)
}

// ---------------------------------------------------------------------------
// models bundle / bench / eval
// ---------------------------------------------------------------------------

/// Load every trained artifact needed for inference, or a prerequisite
/// error naming the command to run first. Returns config-hash warnings.
pub fn load_models(
    config: &PipelineConfig,
    ws: &Workspace,
    need_banks: bool,
) -> Result<(PipelineModels, Vec<String>)> {
    let mut warnings = Vec::new();
    let det_path = ws.detector_model();
    if !det_path.exists() {
        return Err(Error::Prerequisite(format!(
            "detector model missing at {}; run `mogpe train-detect` first",
            det_path.display()
        )));
    }
    if let Some(w) = check_meta(&det_path, config) {
        warnings.push(w);
    }
    let detector = nnet::load_model::<f32>(&det_path)?;

    let mut orient = BTreeMap::new();
    let mut banks = BTreeMap::new();
    for part in &config.parts {
        let path = ws.orient_model(part.class_id);
        if !path.exists() {
            return Err(Error::Prerequisite(format!(
                "orientation model missing at {}; run `mogpe train-orient` first",
                path.display()
            )));
        }
        if let Some(w) = check_meta(&path, config) {
            warnings.push(w);
        }
        orient.insert(part.class_id, nnet::load_model::<f32>(&path)?);
        if need_banks {
            let bpath = ws.bank_file(part.class_id);
            if !bpath.exists() {
                return Err(Error::Prerequisite(format!(
                    "kernel bank missing at {}; run `mogpe train-orient` first",
                    bpath.display()
                )));
            }
            if let Some(w) = check_meta(&bpath, config) {
                warnings.push(w);
            }
            banks.insert(part.class_id, crate::matching::load_bank(&bpath)?);
        }
    }
    Ok((
        PipelineModels {
            detector,
            detect_input: config.detect.input_size,
            orient,
            banks,
            crop_side: config.orient.side,
            conf_threshold: config.detect.conf_threshold,
            nms_iou: config.detect.nms_iou,
            window_deg: config.matching.window_deg,
        },
        warnings,
    ))
}

pub fn bench_tolerances(config: &PipelineConfig) -> Tolerances {
    Tolerances {
        eps_pos: config.bench.eps_pos,
        eps_ang_deg: config.bench.eps_ang_deg,
        eps_ang_per_class: config.bench.eps_ang_per_class.clone(),
    }
}

/// Run the benchmark for one variant on the pseudo-real domain and write
/// its report files.
pub fn cmd_bench(
    config: &PipelineConfig,
    ws: &Workspace,
    models: &PipelineModels,
    variant: Variant,
) -> Result<BenchmarkTable> {
    let rc = config.randomization(Domain::PseudoReal);
    let table = run_benchmark(
        &rc,
        models,
        variant,
        &bench_tolerances(config),
        config.bench.trials_per_class,
        config.stage_seed("bench"),
    )?;
    write_bench_report(config, ws, &table)?;
    Ok(table)
}

pub fn write_bench_report(
    config: &PipelineConfig,
    ws: &Workspace,
    table: &BenchmarkTable,
) -> Result<()> {
    let mut csv = format!(
        "# config_hash = {}, seed = {}\nvariant,class,trials,successes,rate\n",
        config.hash_hex(),
        config.seed
    );
    for row in &table.per_class {
        csv.push_str(&format!(
            "{},{},{},{},{:.4}\n",
            table.variant.name(),
            config.parts[row.class_id].name,
            row.trials,
            row.successes,
            row.successes as f64 / row.trials.max(1) as f64
        ));
    }
    csv.push_str(&format!(
        "{},overall,{},{},{:.4}\n",
        table.variant.name(),
        table.per_class.iter().map(|r| r.trials).sum::<usize>(),
        table.per_class.iter().map(|r| r.successes).sum::<usize>(),
        table.overall_rate()
    ));
    write_text(
        &ws.reports_dir().join(format!("bench_{}.csv", table.variant.name())),
        &csv,
    )?;

    let mut summary = format!("grasp benchmark — variant {}\n", table.variant.name());
    summary.push_str("class      success\n");
    for row in &table.per_class {
        summary.push_str(&format!(
            "{:<10} {}/{}\n",
            config.parts[row.class_id].name, row.successes, row.trials
        ));
    }
    summary.push_str(&format!("overall    {:.2}%\n", table.overall_rate() * 100.0));
    write_text(
        &ws.reports_dir().join(format!("bench_{}.txt", table.variant.name())),
        &summary,
    )
}

/// A plane texture family fixed to solid colors (used by tests that need
/// a flat background).
pub fn solid_family(color: [u8; 3]) -> TextureFamily {
    TextureFamily {
        kinds: vec![crate::render::TextureKind::Solid],
        color_a: (color, color),
        color_b: (color, color),
        scale: (0.02, 0.02),
        orientation: (0.0, 0.0),
    }
}

/// Noise params that leave images untouched.
pub fn identity_noise() -> NoiseParams {
    NoiseParams::none()
}
