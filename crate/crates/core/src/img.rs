//! 8-bit RGB image buffer and the resampling primitives shared by the
//! pipeline stages.
//!
//! Coordinate convention: pixel `(x, y)` has its center at continuous
//! coordinates `(x, y)`, so the image rectangle spans
//! `[-0.5, width-0.5] x [-0.5, height-0.5]`. Normalized coordinates map
//! that span to `[0, 1]`.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    /// Row-major, 3 bytes per pixel.
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width * height * 3, "raw buffer size");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, px: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&px);
    }

    /// Grayscale value (Rec. 601 luma) of one pixel.
    #[inline]
    pub fn luma(&self, x: usize, y: usize) -> f64 {
        let [r, g, b] = self.get(x, y);
        0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
    }

    /// Bilinear sample at continuous coordinates; out-of-range area reads
    /// as `fill`. Exact at integer coordinates.
    pub fn sample_bilinear(&self, x: f64, y: f64, fill: [u8; 3]) -> [u8; 3] {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let x0 = x0 as i64;
        let y0 = y0 as i64;

        let texel = |xi: i64, yi: i64| -> [f64; 3] {
            if xi < 0 || yi < 0 || xi >= self.width as i64 || yi >= self.height as i64 {
                [fill[0] as f64, fill[1] as f64, fill[2] as f64]
            } else {
                let p = self.get(xi as usize, yi as usize);
                [p[0] as f64, p[1] as f64, p[2] as f64]
            }
        };

        let p00 = texel(x0, y0);
        let p10 = texel(x0 + 1, y0);
        let p01 = texel(x0, y0 + 1);
        let p11 = texel(x0 + 1, y0 + 1);
        let mut out = [0u8; 3];
        for c in 0..3 {
            let top = p00[c] * (1.0 - fx) + p10[c] * fx;
            let bot = p01[c] * (1.0 - fx) + p11[c] * fx;
            let v = top * (1.0 - fy) + bot * fy;
            out[c] = v.round().clamp(0.0, 255.0) as u8;
        }
        out
    }

    /// Rotate counter-clockwise (as displayed, y down) by `deg` about the
    /// image center, bilinear resampling, zero fill. `deg = 0` is exact.
    pub fn rotate_ccw(&self, deg: f64) -> RgbImage {
        if deg == 0.0 {
            return self.clone();
        }
        let rad = deg.to_radians();
        let (s, c) = (rad.sin(), rad.cos());
        let cx = (self.width as f64 - 1.0) / 2.0;
        let cy = (self.height as f64 - 1.0) / 2.0;
        let mut out = RgbImage::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                // Inverse map: rotate the destination offset by +deg in
                // screen coordinates (y down), which undoes a CCW rotation
                // of the content.
                let sx = cx + c * dx - s * dy;
                let sy = cy + s * dx + c * dy;
                out.set(x, y, self.sample_bilinear(sx, sy, [0, 0, 0]));
            }
        }
        out
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf: image::RgbImage = image::ImageBuffer::from_raw(
            self.width as u32,
            self.height as u32,
            self.data.clone(),
        )
        .expect("buffer size");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))
    }

    pub fn load_png(path: &Path) -> Result<RgbImage> {
        let img = image::open(path)
            .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?
            .to_rgb8();
        Ok(RgbImage::from_raw(
            img.width() as usize,
            img.height() as usize,
            img.into_raw(),
        ))
    }
}

/// Continuous pixel coordinate -> normalized [0,1] along an axis of `n` pixels.
#[inline]
pub fn px_to_norm(px: f64, n: usize) -> f64 {
    (px + 0.5) / n as f64
}

/// Normalized [0,1] -> continuous pixel coordinate.
#[inline]
pub fn norm_to_px(u: f64, n: usize) -> f64 {
    u * n as f64 - 0.5
}

/// Grayscale rotation of a binary mask; `true` where the rotated mask
/// covers at least half a pixel.
pub fn rotate_mask_ccw(mask: &[bool], width: usize, height: usize, deg: f64) -> Vec<bool> {
    if deg == 0.0 {
        return mask.to_vec();
    }
    let rad = deg.to_radians();
    let (s, c) = (rad.sin(), rad.cos());
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let texel = |xi: i64, yi: i64| -> f64 {
        if xi < 0 || yi < 0 || xi >= width as i64 || yi >= height as i64 {
            0.0
        } else if mask[yi as usize * width + xi as usize] {
            1.0
        } else {
            0.0
        }
    };
    let mut out = vec![false; width * height];
    for y in 0..height {
        for x in 0..width {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let sx = cx + c * dx - s * dy;
            let sy = cy + s * dx + c * dy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as i64, y0 as i64);
            let top = texel(x0, y0) * (1.0 - fx) + texel(x0 + 1, y0) * fx;
            let bot = texel(x0, y0 + 1) * (1.0 - fx) + texel(x0 + 1, y0 + 1) * fx;
            out[y * width + x] = top * (1.0 - fy) + bot * fy >= 0.5;
        }
    }
    out
}
