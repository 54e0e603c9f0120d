//! Procedural textures. Sampling is a pure function of (kind, parameters,
//! seed) so any surface point can be evaluated independently.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextureKind {
    Solid,
    Checker,
    Noise,
    Gradient,
}

impl TextureKind {
    pub fn name(self) -> &'static str {
        match self {
            TextureKind::Solid => "solid",
            TextureKind::Checker => "checker",
            TextureKind::Noise => "noise",
            TextureKind::Gradient => "gradient",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "solid" => Ok(TextureKind::Solid),
            "checker" => Ok(TextureKind::Checker),
            "noise" => Ok(TextureKind::Noise),
            "gradient" => Ok(TextureKind::Gradient),
            other => Err(Error::InvalidConfig(format!("unknown texture kind {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Texture {
    pub kind: TextureKind,
    pub color_a: [u8; 3],
    pub color_b: [u8; 3],
    /// Feature size in surface units (meters on the plane / part).
    pub scale: f64,
    /// Pattern orientation, radians.
    pub orientation: f64,
    pub seed: u64,
}

impl Texture {
    pub fn solid(color: [u8; 3]) -> Self {
        Texture {
            kind: TextureKind::Solid,
            color_a: color,
            color_b: color,
            scale: 1.0,
            orientation: 0.0,
            seed: 0,
        }
    }

    /// Color at surface coordinates (u, v).
    pub fn sample(&self, u: f64, v: f64) -> [u8; 3] {
        match self.kind {
            TextureKind::Solid => self.color_a,
            TextureKind::Checker => {
                let (ru, rv) = self.rotated(u, v);
                let iu = (ru / self.scale).floor() as i64;
                let iv = (rv / self.scale).floor() as i64;
                if (iu + iv).rem_euclid(2) == 0 {
                    self.color_a
                } else {
                    self.color_b
                }
            }
            TextureKind::Gradient => {
                let (s, c) = self.orientation.sin_cos();
                let t = (0.5 + (u * c + v * s) / self.scale).clamp(0.0, 1.0);
                lerp_color(self.color_a, self.color_b, t)
            }
            TextureKind::Noise => {
                let (ru, rv) = self.rotated(u, v);
                let t = value_noise(ru / self.scale, rv / self.scale, self.seed);
                lerp_color(self.color_a, self.color_b, t)
            }
        }
    }

    fn rotated(&self, u: f64, v: f64) -> (f64, f64) {
        if self.orientation == 0.0 {
            return (u, v);
        }
        let (s, c) = (-self.orientation).sin_cos();
        (c * u - s * v, s * u + c * v)
    }
}

fn lerp_color(a: [u8; 3], b: [u8; 3], t: f64) -> [u8; 3] {
    let mut out = [0u8; 3];
    for i in 0..3 {
        let v = a[i] as f64 + (b[i] as f64 - a[i] as f64) * t;
        out[i] = v.round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Smoothed lattice value noise in [0, 1].
fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (xi, yi) = (x0 as i64, y0 as i64);
    let v = |dx: i64, dy: i64| rng::unit_f64(rng::hash2(xi + dx, yi + dy, seed));
    let sx = fx * fx * (3.0 - 2.0 * fx);
    let sy = fy * fy * (3.0 - 2.0 * fy);
    let top = v(0, 0) * (1.0 - sx) + v(1, 0) * sx;
    let bot = v(0, 1) * (1.0 - sx) + v(1, 1) * sx;
    top * (1.0 - sy) + bot * sy
}

/// Value ranges a texture family draws from.
#[derive(Debug, Clone)]
pub struct TextureFamily {
    pub kinds: Vec<TextureKind>,
    /// Per-channel inclusive color ranges.
    pub color_a: ([u8; 3], [u8; 3]),
    pub color_b: ([u8; 3], [u8; 3]),
    pub scale: (f64, f64),
    /// Orientation range in radians.
    pub orientation: (f64, f64),
}

/// Draw a texture from a family: the kind uniformly among enabled kinds,
/// parameters uniformly from their ranges. Pure function of the seed.
pub fn randomize_texture(family: &TextureFamily, seed: u64) -> Result<Texture> {
    if family.kinds.is_empty() {
        return Err(Error::EmptyTextureKinds);
    }
    let mut r = rng::stream(seed, 0x5445_5854);
    let kind = family.kinds[r.gen_range(0..family.kinds.len())];
    let mut color = |range: &([u8; 3], [u8; 3])| -> [u8; 3] {
        let mut c = [0u8; 3];
        for i in 0..3 {
            c[i] = r.gen_range(range.0[i]..=range.1[i]);
        }
        c
    };
    let color_a = color(&family.color_a);
    let color_b = color(&family.color_b);
    let scale = if family.scale.0 < family.scale.1 {
        r.gen_range(family.scale.0..family.scale.1)
    } else {
        family.scale.0
    };
    let orientation = if family.orientation.0 < family.orientation.1 {
        r.gen_range(family.orientation.0..family.orientation.1)
    } else {
        family.orientation.0
    };
    Ok(Texture {
        kind,
        color_a,
        color_b,
        scale,
        orientation,
        seed: rng::derive(seed, 0x4e4f_4953),
    })
}
