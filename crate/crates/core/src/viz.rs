//! Annotated-image rendering for the visualize command: boxes, class
//! digits and an orientation arrow per detection.

use crate::detect::Detection;
use crate::img::{norm_to_px, RgbImage};

/// Fixed class palette (cycles past 6 classes).
pub fn class_color(class_id: usize) -> [u8; 3] {
    const PALETTE: [[u8; 3]; 6] = [
        [255, 64, 64],
        [64, 220, 64],
        [80, 120, 255],
        [240, 200, 40],
        [220, 80, 220],
        [60, 220, 220],
    ];
    PALETTE[class_id % PALETTE.len()]
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() {
        img.set(x as usize, y as usize, color);
    }
}

pub fn draw_line(img: &mut RgbImage, x0: f64, y0: f64, x1: f64, y1: f64, color: [u8; 3]) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        put(
            img,
            (x0 + (x1 - x0) * t).round() as i64,
            (y0 + (y1 - y0) * t).round() as i64,
            color,
        );
    }
}

pub fn draw_rect(img: &mut RgbImage, x0: f64, y0: f64, x1: f64, y1: f64, color: [u8; 3]) {
    draw_line(img, x0, y0, x1, y0, color);
    draw_line(img, x1, y0, x1, y1, color);
    draw_line(img, x1, y1, x0, y1, color);
    draw_line(img, x0, y1, x0, y0, color);
}

/// 3x5 digit bitmaps, row-major, most significant bit left.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

pub fn draw_digit(img: &mut RgbImage, digit: usize, x: i64, y: i64, color: [u8; 3]) {
    let glyph = DIGITS[digit % 10];
    for (ry, row) in glyph.iter().enumerate() {
        for rx in 0..3 {
            if row & (0b100 >> rx) != 0 {
                put(img, x + rx as i64, y + ry as i64, color);
            }
        }
    }
}

/// Draw one detection: bbox outline, class digit at the top-left corner,
/// and an arrow from the box center along the estimated angle (degrees,
/// counter-clockwise as displayed).
pub fn draw_detection(img: &mut RgbImage, det: &Detection, angle_deg: Option<f64>) {
    let color = class_color(det.class_id);
    let (w, h) = (img.width(), img.height());
    let x0 = norm_to_px(det.cx - det.w / 2.0, w);
    let x1 = norm_to_px(det.cx + det.w / 2.0, w);
    let y0 = norm_to_px(det.cy - det.h / 2.0, h);
    let y1 = norm_to_px(det.cy + det.h / 2.0, h);
    draw_rect(img, x0, y0, x1, y1, color);
    draw_digit(img, det.class_id, x0 as i64 + 2, y0 as i64 + 2, color);
    if let Some(deg) = angle_deg {
        let cx = norm_to_px(det.cx, w);
        let cy = norm_to_px(det.cy, h);
        let len = 0.75 * (x1 - x0).max(y1 - y0) / 2.0;
        let rad = deg.to_radians();
        // World CCW appears CCW on screen with v down: (cos, -sin).
        let tip_x = cx + len * rad.cos();
        let tip_y = cy - len * rad.sin();
        draw_line(img, cx, cy, tip_x, tip_y, color);
        // Arrowhead: two short back-strokes.
        for side in [-1.0, 1.0] {
            let back = rad + side * 2.6;
            draw_line(
                img,
                tip_x,
                tip_y,
                tip_x + 0.35 * len * back.cos(),
                tip_y - 0.35 * len * back.sin(),
                color,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drawing_stays_in_bounds() {
        let mut img = RgbImage::new(32, 32);
        let det = Detection {
            class_id: 1,
            cx: 0.95,
            cy: 0.05,
            w: 0.4,
            h: 0.4,
            confidence: 1.0,
        };
        draw_detection(&mut img, &det, Some(45.0));
        // No panic and something was drawn.
        assert!(img.data().iter().any(|&v| v != 0));
    }

    #[test]
    fn arrow_points_up_for_90_degrees() {
        let mut img = RgbImage::new(64, 64);
        let det = Detection {
            class_id: 0,
            cx: 0.5,
            cy: 0.5,
            w: 0.5,
            h: 0.5,
            confidence: 1.0,
        };
        draw_detection(&mut img, &det, Some(90.0));
        let color = class_color(0);
        // A pixel straight above the center carries the arrow color
        // (the half-integer center (31.5, 31.5) rounds to column 32).
        assert_eq!(img.get(32, 24), color);
    }
}
