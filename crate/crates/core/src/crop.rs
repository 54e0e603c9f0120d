//! ROI standardization between the two stages: cut each detection out of
//! the frame, zero-pad to a square, and resize to the estimator's input
//! side without changing the orientation of the content.

use std::collections::BTreeMap;

use crate::detect::Detection;
use crate::error::{Error, Result};
use crate::img::{norm_to_px, RgbImage};

/// Axis-aligned box in normalized [0,1] image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn from_normalized(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    /// Continuous pixel-space corners for an image size.
    fn to_px(self, width: usize, height: usize) -> (f64, f64, f64, f64) {
        (
            norm_to_px(self.cx - self.w / 2.0, width),
            norm_to_px(self.cy - self.h / 2.0, height),
            norm_to_px(self.cx + self.w / 2.0, width),
            norm_to_px(self.cy + self.h / 2.0, height),
        )
    }

    /// Grow by `ceil(frac * max_side_px)` pixels on every side, so slight
    /// detector error does not clip the silhouette.
    pub fn dilate(self, frac: f64, width: usize, height: usize) -> BBox {
        let side_px = (self.w * width as f64).max(self.h * height as f64);
        let d = (frac * side_px).ceil();
        BBox {
            cx: self.cx,
            cy: self.cy,
            w: self.w + 2.0 * d / width as f64,
            h: self.h + 2.0 * d / height as f64,
        }
    }
}

/// Pixel-exact copy of the clamped integer-bounds region covered by the
/// bbox (floor/ceil so the continuous box is covered fully).
pub fn crop_roi(image: &RgbImage, bbox: &BBox) -> Result<RgbImage> {
    let (w, h) = (image.width(), image.height());
    let (x0f, y0f, x1f, y1f) = bbox.to_px(w, h);
    let x0 = x0f.floor().max(0.0) as i64;
    let y0 = y0f.floor().max(0.0) as i64;
    let x1 = x1f.ceil().min(w as f64 - 1.0) as i64;
    let y1 = y1f.ceil().min(h as f64 - 1.0) as i64;
    if x1 < x0 || y1 < y0 || x1f < -0.5 || y1f < -0.5 || x0f > w as f64 - 0.5 || y0f > h as f64 - 0.5
    {
        return Err(Error::EmptyCropRegion);
    }
    let (cw, ch) = ((x1 - x0 + 1) as usize, (y1 - y0 + 1) as usize);
    let mut out = RgbImage::new(cw, ch);
    for y in 0..ch {
        for x in 0..cw {
            out.set(x, y, image.get(x0 as usize + x, y0 as usize + y));
        }
    }
    Ok(out)
}

/// Zero-pad to `max(H, W)` square with the original centered; the extra
/// pixel goes to the bottom/right when parities differ.
pub fn pad_to_square(image: &RgbImage) -> RgbImage {
    let (w, h) = (image.width(), image.height());
    if w == h {
        return image.clone();
    }
    let side = w.max(h);
    let ox = (side - w) / 2;
    let oy = (side - h) / 2;
    let mut out = RgbImage::new(side, side);
    for y in 0..h {
        for x in 0..w {
            out.set(x + ox, y + oy, image.get(x, y));
        }
    }
    out
}

/// Bilinear resize of a square image to `side`, corner-aligned sampling.
/// Identity (bit-exact) when sizes already match.
pub fn resize(image: &RgbImage, side: usize) -> Result<RgbImage> {
    if !image.is_square() {
        return Err(Error::NonSquareImage {
            width: image.width(),
            height: image.height(),
        });
    }
    let src = image.width();
    if src == side {
        return Ok(image.clone());
    }
    let mut out = RgbImage::new(side, side);
    let scale = if side > 1 {
        (src as f64 - 1.0) / (side as f64 - 1.0)
    } else {
        0.0
    };
    for y in 0..side {
        for x in 0..side {
            let sx = x as f64 * scale;
            let sy = y as f64 * scale;
            out.set(x, y, image.sample_bilinear(sx, sy, [0, 0, 0]));
        }
    }
    Ok(out)
}

/// Default margin added around detector boxes before cropping.
pub const BBOX_DILATION: f64 = 0.05;

/// The full standardization chain: dilate, crop, pad to square, resize.
pub fn standardize(image: &RgbImage, bbox: &BBox, side: usize) -> Result<RgbImage> {
    let dilated = bbox.dilate(BBOX_DILATION, image.width(), image.height());
    let cut = crop_roi(image, &dilated)?;
    resize(&pad_to_square(&cut), side)
}

/// A standardized crop with its provenance detection.
#[derive(Debug, Clone)]
pub struct RoutedCrop {
    pub class_id: usize,
    pub image: RgbImage,
    pub bbox: BBox,
    /// Position in the input detection list.
    pub detection_index: usize,
}

/// Standardize every detection and group the crops by class, preserving
/// input order within each group. Every detection lands in exactly one
/// group.
pub fn route(
    image: &RgbImage,
    detections: &[Detection],
    side: usize,
) -> Result<BTreeMap<usize, Vec<RoutedCrop>>> {
    let mut groups: BTreeMap<usize, Vec<RoutedCrop>> = BTreeMap::new();
    for (i, det) in detections.iter().enumerate() {
        let bbox = BBox::from_normalized(det.cx, det.cy, det.w, det.h);
        let crop = standardize(image, &bbox, side)?;
        groups.entry(det.class_id).or_default().push(RoutedCrop {
            class_id: det.class_id,
            image: crop,
            bbox,
            detection_index: i,
        });
    }
    Ok(groups)
}
