//! High-precision refinement: a precomputed bank of rotated kernel
//! images, masked zero-normalized cross-correlation scoring, a local
//! search window seeded by the CNN estimate, and a full-range fallback.

use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::img::{rotate_mask_ccw, RgbImage};
use crate::nnet::crc32;

pub const BANK_MAGIC: &[u8; 6] = b"MOGPB1";

/// One rotated copy: grayscale pixels plus its foreground mask.
#[derive(Debug, Clone)]
struct KernelCopy {
    luma: Vec<f64>,
    mask: Vec<bool>,
    /// Mean and centered energy over the mask, precomputed for scoring.
    mean: f64,
    energy: f64,
}

/// Rotated copies of one kernel image at a fixed angular step.
#[derive(Debug, Clone)]
pub struct KernelBank {
    pub class_id: usize,
    pub step_deg: f64,
    pub side: usize,
    base_image: RgbImage,
    base_mask: Vec<bool>,
    copies: Vec<KernelCopy>,
}

fn luma_plane(image: &RgbImage) -> Vec<f64> {
    let (w, h) = (image.width(), image.height());
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = image.luma(x, y);
        }
    }
    out
}

fn copy_stats(luma: &[f64], mask: &[bool]) -> (f64, f64, usize) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for (v, &m) in luma.iter().zip(mask) {
        if m {
            sum += v;
            n += 1;
        }
    }
    if n == 0 {
        return (0.0, 0.0, 0);
    }
    let mean = sum / n as f64;
    let mut energy = 0.0;
    for (v, &m) in luma.iter().zip(mask) {
        if m {
            energy += (v - mean) * (v - mean);
        }
    }
    (mean, energy, n)
}

impl KernelBank {
    /// Rotate the kernel image (and its silhouette mask) `360/step - 1`
    /// times; copy `j` is the base rotated by `j * step` degrees.
    pub fn build(
        class_id: usize,
        kernel_image: &RgbImage,
        base_mask: &[bool],
        step_deg: f64,
    ) -> Result<KernelBank> {
        if !kernel_image.is_square() {
            return Err(Error::NonSquareImage {
                width: kernel_image.width(),
                height: kernel_image.height(),
            });
        }
        let count = 360.0 / step_deg;
        if step_deg <= 0.0 || (count - count.round()).abs() > 1e-9 {
            return Err(Error::BadBankStep { step: step_deg });
        }
        let count = count.round() as usize;
        let side = kernel_image.width();
        if base_mask.len() != side * side {
            return Err(Error::EmptyMask);
        }
        let copies: Vec<KernelCopy> = (0..count)
            .map(|j| {
                let deg = j as f64 * step_deg;
                let img = kernel_image.rotate_ccw(deg);
                let mask = rotate_mask_ccw(base_mask, side, side, deg);
                let luma = luma_plane(&img);
                let (mean, energy, _) = copy_stats(&luma, &mask);
                KernelCopy {
                    luma,
                    mask,
                    mean,
                    energy,
                }
            })
            .collect();
        Ok(KernelBank {
            class_id,
            step_deg,
            side,
            base_image: kernel_image.clone(),
            base_mask: base_mask.to_vec(),
            copies,
        })
    }

    pub fn len(&self) -> usize {
        self.copies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.copies.is_empty()
    }

    pub fn copy_image(&self, j: usize) -> RgbImage {
        self.base_image.rotate_ccw(j as f64 * self.step_deg)
    }

    pub fn angle_of(&self, j: usize) -> f64 {
        j as f64 * self.step_deg
    }
}

/// Zero-normalized cross-correlation between a crop and bank copy `j`,
/// computed on luma over the copy's foreground mask. Returns the score
/// and a degenerate flag (zero variance on either side scores 0).
pub fn similarity(bank: &KernelBank, crop_luma: &[f64], j: usize) -> Result<(f64, bool)> {
    let copy = &bank.copies[j];
    if crop_luma.len() != copy.luma.len() {
        return Err(Error::ShapeMismatch {
            layer: usize::MAX,
            expected: vec![copy.luma.len()],
            actual: vec![crop_luma.len()],
        });
    }
    let (crop_mean, crop_energy, n) = copy_stats(crop_luma, &copy.mask);
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    if copy.energy <= 1e-12 || crop_energy <= 1e-12 {
        return Ok((0.0, true));
    }
    let mut dot = 0.0;
    for i in 0..crop_luma.len() {
        if copy.mask[i] {
            dot += (crop_luma[i] - crop_mean) * (copy.luma[i] - copy.mean);
        }
    }
    Ok((dot / (copy.energy * crop_energy).sqrt(), false))
}

/// A refinement result: the best bank angle and its score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    pub theta_deg: f64,
    pub score: f64,
    pub comparisons: usize,
}

pub fn crop_luma(crop: &RgbImage) -> Vec<f64> {
    luma_plane(crop)
}

fn wrap_deg(deg: f64) -> f64 {
    deg.rem_euclid(360.0)
}

/// Circular distance in degrees, in [0, 180].
fn circ_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Score the given bank indices and return the argmax. Ties prefer the
/// smallest deviation from `reference_deg`, then the smaller angle.
fn best_over(
    bank: &KernelBank,
    crop: &[f64],
    indices: impl Iterator<Item = usize>,
    reference_deg: f64,
) -> Result<MatchResult> {
    let mut best: Option<(f64, f64, f64)> = None; // (score, dev, angle)
    let mut comparisons = 0usize;
    let mut all_degenerate = true;
    for j in indices {
        let (score, degenerate) = similarity(bank, crop, j)?;
        comparisons += 1;
        if !degenerate {
            all_degenerate = false;
        }
        let angle = bank.angle_of(j);
        let dev = circ_dist(angle, reference_deg);
        let better = match &best {
            None => true,
            Some((bs, bdev, bangle)) => {
                score > *bs
                    || (score == *bs && (dev < *bdev || (dev == *bdev && angle < *bangle)))
            }
        };
        if better {
            best = Some((score, dev, angle));
        }
    }
    let (score, _, angle) = best.ok_or(Error::UnmatchableCrop)?;
    if all_degenerate {
        return Err(Error::UnmatchableCrop);
    }
    Ok(MatchResult {
        theta_deg: angle,
        score,
        comparisons,
    })
}

/// Local search: evaluate every bank angle within `window_deg` of the
/// initial estimate (snapped to the bank grid, wrapping mod 360) and
/// return the argmax. With the default +-10 degrees at 1-degree steps this
/// performs exactly 21 comparisons.
pub fn refine(
    bank: &KernelBank,
    crop: &RgbImage,
    init_theta_deg: f64,
    window_deg: f64,
) -> Result<MatchResult> {
    let luma = crop_luma(crop);
    let size = bank.len() as isize;
    let center = (wrap_deg(init_theta_deg) / bank.step_deg).round() as isize % size;
    let halfspan = (window_deg / bank.step_deg).round() as isize;
    if halfspan * 2 + 1 >= size as isize {
        // Window covers the whole circle: identical to a full search.
        return full_search_luma(bank, &luma, init_theta_deg);
    }
    let indices = (-halfspan..=halfspan).map(move |d| (center + d).rem_euclid(size) as usize);
    best_over(bank, &luma, indices, wrap_deg(init_theta_deg))
}

/// Exhaustive search over the whole bank; ties resolve toward angle 0.
pub fn full_search(bank: &KernelBank, crop: &RgbImage) -> Result<MatchResult> {
    full_search_luma(bank, &crop_luma(crop), 0.0)
}

fn full_search_luma(bank: &KernelBank, luma: &[f64], reference_deg: f64) -> Result<MatchResult> {
    best_over(bank, luma, 0..bank.len(), reference_deg)
}

// ---------------------------------------------------------------------------
// Bank cache file: magic MOGPB1, step (f64 LE), size u32, side u32, then the
// base image (side^2 * 3 bytes RGB) and base mask (side^2 bytes), CRC32.
// Rotated copies are rebuilt on load.
// ---------------------------------------------------------------------------

pub fn encode_bank(bank: &KernelBank) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(BANK_MAGIC);
    buf.extend_from_slice(&bank.step_deg.to_le_bytes());
    buf.extend_from_slice(&(bank.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(bank.side as u32).to_le_bytes());
    buf.extend_from_slice(&(bank.class_id as u32).to_le_bytes());
    buf.extend_from_slice(bank.base_image.data());
    buf.extend(bank.base_mask.iter().map(|&m| m as u8));
    let crc = crc32(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn decode_bank(bytes: &[u8]) -> Result<KernelBank> {
    let err = |m: String| Error::ModelFormat(m);
    if bytes.len() < 6 + 8 + 4 + 4 + 4 + 4 {
        return Err(err("bank file truncated".into()));
    }
    if &bytes[..6] != BANK_MAGIC {
        return Err(err(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..6]),
            String::from_utf8_lossy(BANK_MAGIC)
        )));
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if stored != crc32(body) {
        return Err(err("bank CRC mismatch".into()));
    }
    let step_deg = f64::from_le_bytes(body[6..14].try_into().unwrap());
    let size = u32::from_le_bytes(body[14..18].try_into().unwrap()) as usize;
    let side = u32::from_le_bytes(body[18..22].try_into().unwrap()) as usize;
    let class_id = u32::from_le_bytes(body[22..26].try_into().unwrap()) as usize;
    let img_len = side * side * 3;
    let expected = 26 + img_len + side * side;
    if body.len() != expected {
        return Err(err(format!(
            "bank payload size {} does not match header ({expected})",
            body.len()
        )));
    }
    let image = RgbImage::from_raw(side, side, body[26..26 + img_len].to_vec());
    let mask: Vec<bool> = body[26 + img_len..].iter().map(|&b| b != 0).collect();
    let bank = KernelBank::build(class_id, &image, &mask, step_deg)?;
    if bank.len() != size {
        return Err(err("bank size does not match header".into()));
    }
    Ok(bank)
}

pub fn save_bank(bank: &KernelBank, path: &Path) -> Result<()> {
    let bytes = encode_bank(bank);
    let mut f =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(&bytes)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_bank(path: &Path) -> Result<KernelBank> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode_bank(&bytes)
}
