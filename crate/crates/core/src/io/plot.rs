//! Bare-bones raster plots: axes, points, polylines. No text; the numbers
//! live in the CSV and JSON next to each plot.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::Result;

const W: u32 = 480;
const H: u32 = 360;
const M: f64 = 30.0;

pub struct Canvas {
    img: RgbImage,
    x: (f64, f64),
    y: (f64, f64),
}

pub const PALETTE: [[u8; 3]; 7] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
];

impl Canvas {
    pub fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |(a, b): (f64, f64)| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        let mut c = Self {
            img: RgbImage::from_pixel(W, H, Rgb([255, 255, 255])),
            x: pad(x),
            y: pad(y),
        };
        c.axes();
        c
    }

    fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let px = M + (x - self.x.0) / (self.x.1 - self.x.0) * (W as f64 - 2.0 * M);
        let py = H as f64 - M - (y - self.y.0) / (self.y.1 - self.y.0) * (H as f64 - 2.0 * M);
        (px, py)
    }

    fn put(&mut self, px: i64, py: i64, color: [u8; 3]) {
        if px >= 0 && py >= 0 && (px as u32) < W && (py as u32) < H {
            self.img.put_pixel(px as u32, py as u32, Rgb(color));
        }
    }

    fn segment_px(&mut self, a: (f64, f64), b: (f64, f64), color: [u8; 3]) {
        let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            self.put((a.0 + t * (b.0 - a.0)).round() as i64, (a.1 + t * (b.1 - a.1)).round() as i64, color);
        }
    }

    fn axes(&mut self) {
        let black = [0, 0, 0];
        let (x0, y0) = (M, H as f64 - M);
        self.segment_px((x0, y0), (W as f64 - M, y0), black);
        self.segment_px((x0, y0), (x0, M), black);
    }

    pub fn line(&mut self, a: (f64, f64), b: (f64, f64), color: [u8; 3]) {
        let (pa, pb) = (self.to_px(a.0, a.1), self.to_px(b.0, b.1));
        self.segment_px(pa, pb, color);
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], color: [u8; 3]) {
        for w in points.windows(2) {
            self.line(w[0], w[1], color);
        }
        for &p in points {
            self.point(p, color);
        }
    }

    pub fn point(&mut self, p: (f64, f64), color: [u8; 3]) {
        let (px, py) = self.to_px(p.0, p.1);
        for dy in -2..=2 {
            for dx in -2..=2 {
                self.put(px.round() as i64 + dx, py.round() as i64 + dy, color);
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}

pub fn bounds(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}
