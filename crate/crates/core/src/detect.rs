//! Stage 1: single-shot grid detector plus detection metrics (IoU, NMS,
//! mAP50) and the real-data weighting protocol.
//!
//! The detector predicts an `(5+N, S, S)` tensor: per cell objectness,
//! box offsets `(tx, ty, w, h)` and `N` class scores. Each object is
//! assigned to the cell containing its center.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::img::RgbImage;
use crate::nnet::{LayerSpec, NetworkSpec, Tensor, TrainData};
use crate::render::BoxLabel;
use crate::scalar::Scalar;

/// Normalized detection: box center/size in [0,1] plus confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub class_id: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: f64,
}

impl Detection {
    pub fn box4(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }
}

/// Intersection over union of two `[cx, cy, w, h]` boxes; 0 when disjoint.
pub fn iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let ax0 = a[0] - a[2] / 2.0;
    let ax1 = a[0] + a[2] / 2.0;
    let ay0 = a[1] - a[3] / 2.0;
    let ay1 = a[1] + a[3] / 2.0;
    let bx0 = b[0] - b[2] / 2.0;
    let bx1 = b[0] + b[2] / 2.0;
    let by0 = b[1] - b[3] / 2.0;
    let by1 = b[1] + b[3] / 2.0;
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// Grid cell index for a normalized center coordinate. Centers exactly on
/// a cell boundary belong to the lower-index cell.
fn cell_index(coord: f64, s: usize) -> usize {
    let u = coord * s as f64;
    let mut idx = u.floor() as isize;
    if u == idx as f64 && idx > 0 {
        idx -= 1;
    }
    idx.clamp(0, s as isize - 1) as usize
}

/// Encode ground-truth labels into the `(5+N, S, S)` target tensor.
/// Errors when two objects land in one cell.
pub fn encode_targets<S: Scalar>(
    labels: &[BoxLabel],
    grid: usize,
    n_classes: usize,
) -> Result<Tensor<S>> {
    let ch = 5 + n_classes;
    let mut t = Tensor::zeros(&[ch, grid, grid]);
    let plane = grid * grid;
    let mut occupied = vec![false; plane];
    for l in labels {
        let col = cell_index(l.cx, grid);
        let row = cell_index(l.cy, grid);
        let cell = row * grid + col;
        if occupied[cell] {
            return Err(Error::CellCollision { row, col });
        }
        occupied[cell] = true;
        let tx = l.cx * grid as f64 - col as f64;
        let ty = l.cy * grid as f64 - row as f64;
        let d = t.data_mut();
        d[cell] = S::one(); // objectness plane 0
        d[plane + cell] = S::from_f64_lossy(tx);
        d[2 * plane + cell] = S::from_f64_lossy(ty);
        d[3 * plane + cell] = S::from_f64_lossy(l.w);
        d[4 * plane + cell] = S::from_f64_lossy(l.h);
        d[(5 + l.class_id) * plane + cell] = S::one();
    }
    Ok(t)
}

/// Loss weights for a target tensor: object cells weigh 1 on every term,
/// non-object cells weigh 0.5 on objectness and 0 elsewhere.
pub fn target_weights<S: Scalar>(target: &Tensor<S>) -> Tensor<S> {
    let (ch, grid) = (target.shape()[0], target.shape()[1]);
    let plane = grid * grid;
    let mut w = Tensor::zeros(target.shape());
    let half = S::from_f64_lossy(0.5);
    for cell in 0..plane {
        let is_obj = target.data()[cell] > S::from_f64_lossy(0.5);
        let wd = w.data_mut();
        if is_obj {
            for c in 0..ch {
                wd[c * plane + cell] = S::one();
            }
        } else {
            wd[cell] = half;
        }
    }
    w
}

/// Decode a predicted tensor into detections, dropping confidences below
/// the threshold. Inverts `encode_targets` exactly at confidence 1.
pub fn decode_predictions<S: Scalar>(pred: &Tensor<S>, conf_threshold: f64) -> Vec<Detection> {
    let (ch, grid) = (pred.shape()[0], pred.shape()[1]);
    let n_classes = ch - 5;
    let plane = grid * grid;
    let d = pred.data();
    let mut out = Vec::new();
    for row in 0..grid {
        for col in 0..grid {
            let cell = row * grid + col;
            let conf = d[cell].to_f64_lossy().clamp(0.0, 1.0);
            if conf < conf_threshold {
                continue;
            }
            let tx = d[plane + cell].to_f64_lossy();
            let ty = d[2 * plane + cell].to_f64_lossy();
            let w = d[3 * plane + cell].to_f64_lossy().clamp(1e-6, 1.0);
            let h = d[4 * plane + cell].to_f64_lossy().clamp(1e-6, 1.0);
            let mut best_class = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for c in 0..n_classes {
                let s = d[(5 + c) * plane + cell].to_f64_lossy();
                if s > best_score {
                    best_score = s;
                    best_class = c;
                }
            }
            out.push(Detection {
                class_id: best_class,
                cx: (col as f64 + tx) / grid as f64,
                cy: (row as f64 + ty) / grid as f64,
                w,
                h,
                confidence: conf,
            });
        }
    }
    out
}

/// Greedy per-class non-maximum suppression. Candidates ranked by
/// descending confidence (ties: lower class id, then left-most center);
/// a detection is suppressed when its IoU with an already kept one
/// exceeds the threshold.
pub fn nms(detections: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut sorted: Vec<&Detection> = detections.iter().collect();
    sorted.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap()
            .then(a.class_id.cmp(&b.class_id))
            .then(a.cx.partial_cmp(&b.cx).unwrap())
    });
    let mut kept: Vec<Detection> = Vec::new();
    for cand in sorted {
        let suppressed = kept
            .iter()
            .filter(|k| k.class_id == cand.class_id)
            .any(|k| iou(k.box4(), cand.box4()) > iou_threshold);
        if !suppressed {
            kept.push(*cand);
        }
    }
    kept
}

/// Per-class average precision and their unweighted mean, IoU >= 0.5
/// matching, 101-point interpolated AP. Classes without ground truth are
/// excluded from the mean.
pub fn map50(
    predictions: &[Vec<Detection>],
    ground_truths: &[Vec<BoxLabel>],
) -> (BTreeMap<usize, f64>, f64) {
    assert_eq!(
        predictions.len(),
        ground_truths.len(),
        "per-image lists must align"
    );
    let mut classes: Vec<usize> = ground_truths
        .iter()
        .flatten()
        .map(|g| g.class_id)
        .collect();
    classes.sort_unstable();
    classes.dedup();

    let mut aps = BTreeMap::new();
    for &class in &classes {
        let total_gt: usize = ground_truths
            .iter()
            .map(|g| g.iter().filter(|l| l.class_id == class).count())
            .sum();
        // Rank all predictions of this class across the whole set.
        let mut ranked: Vec<(usize, usize, &Detection)> = Vec::new();
        for (img, dets) in predictions.iter().enumerate() {
            for (k, d) in dets.iter().enumerate() {
                if d.class_id == class {
                    ranked.push((img, k, d));
                }
            }
        }
        ranked.sort_by(|a, b| {
            b.2.confidence
                .partial_cmp(&a.2.confidence)
                .unwrap()
                .then(a.0.cmp(&b.0))
                .then(a.1.cmp(&b.1))
        });

        let mut matched: Vec<Vec<bool>> = ground_truths
            .iter()
            .map(|g| vec![false; g.len()])
            .collect();
        let mut tp = Vec::with_capacity(ranked.len());
        for (img, _, det) in &ranked {
            let gts = &ground_truths[*img];
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for (gi, g) in gts.iter().enumerate() {
                if g.class_id != class || matched[*img][gi] {
                    continue;
                }
                let v = iou(det.box4(), [g.cx, g.cy, g.w, g.h]);
                if v > best.0 {
                    best = (v, gi);
                }
            }
            if best.0 >= 0.5 {
                matched[*img][best.1] = true;
                tp.push(true);
            } else {
                tp.push(false);
            }
        }

        // Precision/recall along the ranking, then 101-point interpolation.
        let mut precisions = Vec::with_capacity(tp.len());
        let mut recalls = Vec::with_capacity(tp.len());
        let mut cum_tp = 0usize;
        for (i, &is_tp) in tp.iter().enumerate() {
            if is_tp {
                cum_tp += 1;
            }
            precisions.push(cum_tp as f64 / (i + 1) as f64);
            recalls.push(cum_tp as f64 / total_gt as f64);
        }
        let mut ap = 0.0;
        for r in 0..=100 {
            let r = r as f64 / 100.0;
            let p = precisions
                .iter()
                .zip(&recalls)
                .filter(|(_, &rec)| rec >= r)
                .map(|(&p, _)| p)
                .fold(0.0, f64::max);
            ap += p;
        }
        aps.insert(class, ap / 101.0);
    }
    let mean = if aps.is_empty() {
        0.0
    } else {
        aps.values().sum::<f64>() / aps.len() as f64
    };
    (aps, mean)
}

/// Detector topology: conv/pool stack halving the resolution down to the
/// `S x S` grid, then a 1x1 conv head to `5+N` channels.
pub fn build_detector(grid: usize, n_classes: usize, input_size: usize) -> Result<NetworkSpec> {
    if input_size % grid != 0 || !(input_size / grid).is_power_of_two() {
        return Err(Error::InvalidConfig(format!(
            "input size {input_size} must be grid {grid} times a power of two"
        )));
    }
    let levels = (input_size / grid).trailing_zeros() as usize;
    let widths = [8usize, 16, 32, 48, 64, 64];
    let mut layers = Vec::new();
    let mut in_ch = 3usize;
    for level in 0..levels {
        let out_ch = widths[level.min(widths.len() - 1)];
        layers.push(LayerSpec::Conv2d {
            in_channels: in_ch,
            out_channels: out_ch,
            kernel: 3,
        });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::MaxPool2);
        in_ch = out_ch;
    }
    // Grid-resolution head: widen the receptive field past the part size
    // before predicting per-cell outputs.
    layers.push(LayerSpec::Conv2d {
        in_channels: in_ch,
        out_channels: 64,
        kernel: 3,
    });
    layers.push(LayerSpec::Relu);
    layers.push(LayerSpec::Conv2d {
        in_channels: 64,
        out_channels: 5 + n_classes,
        kernel: 3,
    });
    Ok(NetworkSpec::new(layers))
}

/// How many times the pseudo-real set is repeated so it carries weight
/// equal to the synthetic set: `ceil(n_synthetic / n_pseudo_real)`.
pub fn pseudo_real_repeats(n_synthetic: usize, n_pseudo_real: usize) -> usize {
    if n_pseudo_real == 0 {
        return 0;
    }
    n_synthetic.div_ceil(n_pseudo_real)
}

/// In-memory detector dataset: planar u8 images plus their labels.
/// Training samples are dihedral variants (flips/transpose) of the
/// stored images, encoded on the fly; variant 0 is the original.
pub struct DetectorDataset {
    images: Vec<Vec<u8>>,
    labels: Vec<Vec<BoxLabel>>,
    /// Index order presented to the trainer (synthetic + repeated
    /// pseudo-real entries).
    order: Vec<usize>,
    /// Number of dihedral variants per image (1, 2, 4 or 8).
    augment: usize,
    grid: usize,
    n_classes: usize,
    height: usize,
    width: usize,
}

/// Transform a normalized label into dihedral variant `v` (bit 0: x flip,
/// bit 1: y flip, bit 2: transpose applied after the flips).
fn dihedral_label(l: &BoxLabel, v: usize) -> BoxLabel {
    let mut cx = l.cx;
    let mut cy = l.cy;
    let mut w = l.w;
    let mut h = l.h;
    if v & 1 != 0 {
        cx = 1.0 - cx;
    }
    if v & 2 != 0 {
        cy = 1.0 - cy;
    }
    if v & 4 != 0 {
        std::mem::swap(&mut cx, &mut cy);
        std::mem::swap(&mut w, &mut h);
    }
    BoxLabel {
        class_id: l.class_id,
        cx,
        cy,
        w,
        h,
    }
}

/// The matching pixel transform: destination (x, y) reads the source at
/// the inverse dihedral map.
fn dihedral_planar(planar: &[u8], width: usize, height: usize, v: usize) -> Vec<u8> {
    if v == 0 {
        return planar.to_vec();
    }
    debug_assert!(v < 8 && (v & 4 == 0 || width == height));
    let mut out = vec![0u8; planar.len()];
    let hw = width * height;
    for y in 0..height {
        for x in 0..width {
            // Invert: undo transpose, then undo flips.
            let (mut sx, mut sy) = if v & 4 != 0 { (y, x) } else { (x, y) };
            if v & 1 != 0 {
                sx = width - 1 - sx;
            }
            if v & 2 != 0 {
                sy = height - 1 - sy;
            }
            for c in 0..3 {
                out[c * hw + y * width + x] = planar[c * hw + sy * width + sx];
            }
        }
    }
    out
}

impl DetectorDataset {
    pub fn new(height: usize, width: usize, grid: usize, n_classes: usize, augment: usize) -> Self {
        assert!(matches!(augment, 1 | 2 | 4 | 8));
        Self {
            images: Vec::new(),
            labels: Vec::new(),
            order: Vec::new(),
            augment,
            grid,
            n_classes,
            height,
            width,
        }
    }

    pub fn push(&mut self, image: &RgbImage, labels: &[BoxLabel]) -> Result<()> {
        assert_eq!(image.width(), self.width);
        assert_eq!(image.height(), self.height);
        // Validate the base encoding up front (cell collisions).
        encode_targets::<f32>(labels, self.grid, self.n_classes)?;
        self.images.push(image_to_planar(image));
        self.labels.push(labels.to_vec());
        self.order.push(self.images.len() - 1);
        Ok(())
    }

    pub fn base_len(&self) -> usize {
        self.images.len()
    }

    /// Compose the training order as synthetic plus pseudo-real copies:
    /// entries `[0, n_synthetic)` once and `[n_synthetic, len)` repeated
    /// `pseudo_real_repeats` times.
    pub fn apply_weighting(&mut self, n_synthetic: usize) {
        let n_pseudo = self.images.len() - n_synthetic;
        let mut order: Vec<usize> = (0..n_synthetic).collect();
        if n_pseudo > 0 {
            let repeats = pseudo_real_repeats(n_synthetic, n_pseudo);
            for _ in 0..repeats {
                order.extend(n_synthetic..self.images.len());
            }
        }
        self.order = order;
    }

    pub fn composed_len(&self) -> usize {
        self.order.len()
    }

    fn variant_labels(&self, base: usize, v: usize) -> Vec<BoxLabel> {
        self.labels[base].iter().map(|l| dihedral_label(l, v)).collect()
    }

    fn variant_target(&self, base: usize, v: usize) -> Tensor<f32> {
        match encode_targets::<f32>(&self.variant_labels(base, v), self.grid, self.n_classes) {
            Ok(t) => t,
            // A flipped boundary tie can collide; fall back to the
            // untransformed sample (deterministic).
            Err(_) => encode_targets::<f32>(&self.labels[base], self.grid, self.n_classes)
                .expect("base encoding validated at push"),
        }
    }
}

/// Planar `[3, H, W]` bytes from an interleaved RGB image.
pub fn image_to_planar(image: &RgbImage) -> Vec<u8> {
    let (w, h) = (image.width(), image.height());
    let mut out = vec![0u8; 3 * w * h];
    for y in 0..h {
        for x in 0..w {
            let p = image.get(x, y);
            for c in 0..3 {
                out[c * w * h + y * w + x] = p[c];
            }
        }
    }
    out
}

pub fn planar_to_tensor<S: Scalar>(planar: &[u8], height: usize, width: usize) -> Tensor<S> {
    let scale = S::from_f64_lossy(1.0 / 255.0);
    Tensor::from_vec(
        &[3, height, width],
        planar
            .iter()
            .map(|&v| S::from_usize(v as usize).unwrap() * scale)
            .collect(),
    )
}

/// Detector input: per-image standardization (zero mean, unit variance
/// over all pixels). Global brightness/contrast jitter is an affine map
/// of every pixel, so this cancels it exactly.
pub fn standardized_input(planar: &[u8], height: usize, width: usize) -> Tensor<f32> {
    let n = planar.len() as f64;
    let mean = planar.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = planar
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let inv_std = 1.0 / var.sqrt().max(1e-6);
    Tensor::from_vec(
        &[3, height, width],
        planar
            .iter()
            .map(|&v| (((v as f64) - mean) * inv_std) as f32)
            .collect(),
    )
}

impl TrainData<f32> for DetectorDataset {
    fn len(&self) -> usize {
        self.order.len() * self.augment
    }
    fn input(&self, index: usize) -> Tensor<f32> {
        let base = self.order[index / self.augment];
        let v = index % self.augment;
        let planar = dihedral_planar(&self.images[base], self.width, self.height, v);
        standardized_input(&planar, self.height, self.width)
    }
    fn target(&self, index: usize) -> Tensor<f32> {
        let base = self.order[index / self.augment];
        let v = index % self.augment;
        self.variant_target(base, v)
    }
    fn weight(&self, index: usize) -> Option<Tensor<f32>> {
        Some(target_weights(&self.target(index)))
    }
}

/// Run the detector on one image: forward, decode, suppress.
pub fn detect_image(
    net: &crate::nnet::Network<f32>,
    image: &RgbImage,
    conf_threshold: f64,
    iou_threshold: f64,
) -> Result<Vec<Detection>> {
    let input = standardized_input(&image_to_planar(image), image.height(), image.width());
    let pred = net.infer(&input)?;
    Ok(nms(&decode_predictions(&pred, conf_threshold), iou_threshold))
}

/// mAP50 of a detector over in-memory labeled images.
pub fn eval_detector_in_memory(
    net: &crate::nnet::Network<f32>,
    samples: &[(RgbImage, Vec<BoxLabel>)],
    conf_threshold: f64,
    iou_threshold: f64,
) -> (BTreeMap<usize, f64>, f64) {
    use rayon::prelude::*;
    let preds: Vec<Vec<Detection>> = samples
        .par_iter()
        .map(|(img, _)| detect_image(net, img, conf_threshold, iou_threshold).unwrap_or_default())
        .collect();
    let gts: Vec<Vec<BoxLabel>> = samples.iter().map(|(_, l)| l.clone()).collect();
    map50(&preds, &gts)
}
