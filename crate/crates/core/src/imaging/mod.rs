//! Image pipeline: color calibration, per-slice segmentation, model-ready
//! tensors and the simplified (mean color + area) features.

mod calibrate;
mod features;
mod segment;
mod tensor;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use calibrate::{calibrate_color, cct_to_xy, white_point_rgb, ChannelGains};
pub use features::{extract_simple_features, SimpleImageFeatures};
pub use segment::{segment_slices, Segmenter, ThresholdSegmenter};
pub use tensor::{to_model_tensor, TENSOR_SIDE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Raw,
    Calibrated,
    Masked,
    Tensor,
}

/// Row-major boolean mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)`, `None` when empty.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bb = Some(match bb {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bb
    }

    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += x as f64;
                    sy += y as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    pub fn intersection_over_union(&self, other: &Mask) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn is_disjoint(&self, other: &Mask) -> bool {
        !self.bits.iter().zip(&other.bits).any(|(&a, &b)| a && b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pixels {
    /// Interleaved RGB, 8 bits per channel.
    U8(Vec<u8>),
    /// Interleaved RGB in `[0, 1]`.
    F32(Vec<f32>),
}

/// An RGB image tagged with its pipeline stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceImage {
    pub width: usize,
    pub height: usize,
    pub stage: Stage,
    pub pixels: Pixels,
    pub mask: Option<Mask>,
    pub sample_id: Option<String>,
}

/// A masked image must keep at least this fraction of its pixels.
pub const MIN_MASK_FRACTION: f64 = 0.001;

impl SliceImage {
    pub fn from_rgb8(width: usize, height: usize, data: Vec<u8>, stage: Stage) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::shape(width * height * 3, data.len()));
        }
        Ok(Self {
            width,
            height,
            stage,
            pixels: Pixels::U8(data),
            mask: None,
            sample_id: None,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::from_rgb8(width, height, data, Stage::Raw).expect("length matches")
    }

    pub fn with_sample_id(mut self, id: impl Into<String>) -> Self {
        self.sample_id = Some(id.into());
        self
    }

    pub fn rgb8(&self) -> Result<&[u8]> {
        match &self.pixels {
            Pixels::U8(v) => Ok(v),
            Pixels::F32(_) => Err(Error::InvalidImage("expected 8-bit pixels".into())),
        }
    }

    pub fn rgb8_mut(&mut self) -> Result<&mut [u8]> {
        match &mut self.pixels {
            Pixels::U8(v) => Ok(v),
            Pixels::F32(_) => Err(Error::InvalidImage("expected 8-bit pixels".into())),
        }
    }

    pub fn unit(&self) -> Result<&[f32]> {
        match &self.pixels {
            Pixels::F32(v) => Ok(v),
            Pixels::U8(_) => Err(Error::InvalidImage("expected tensor pixels".into())),
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        match &self.pixels {
            Pixels::U8(v) => {
                let i = (y * self.width + x) * 3;
                [v[i], v[i + 1], v[i + 2]]
            }
            Pixels::F32(v) => {
                let i = (y * self.width + x) * 3;
                [0, 1, 2].map(|c| (v[i + c] * 255.0).round().clamp(0.0, 255.0) as u8)
            }
        }
    }

    /// Checks the stage-specific invariants.
    pub fn check(&self) -> Result<()> {
        match self.stage {
            Stage::Tensor => {
                if self.width != TENSOR_SIDE || self.height != TENSOR_SIDE {
                    return Err(Error::shape(
                        format!("{TENSOR_SIDE}x{TENSOR_SIDE}x3"),
                        format!("{}x{}x3", self.width, self.height),
                    ));
                }
                let v = self.unit()?;
                if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
                    return Err(Error::InvalidImage("tensor value outside [0, 1]".into()));
                }
            }
            Stage::Masked => {
                let mask = self
                    .mask
                    .as_ref()
                    .ok_or_else(|| Error::InvalidImage("masked image without mask".into()))?;
                if mask.width != self.width || mask.height != self.height {
                    return Err(Error::InvalidImage("mask size differs from image".into()));
                }
                let min = (MIN_MASK_FRACTION * (self.width * self.height) as f64).ceil() as usize;
                if mask.area() < min.max(1) {
                    return Err(Error::InvalidImage(format!(
                        "mask covers {} px, below the {min} px minimum",
                        mask.area()
                    )));
                }
                self.rgb8()?;
            }
            Stage::Raw | Stage::Calibrated => {
                self.rgb8()?;
            }
        }
        Ok(())
    }

    /// Channel-major copy of a tensor-stage image, the layout the encoders expect.
    pub fn to_chw<T: crate::Scalar>(&self) -> Result<Vec<T>> {
        let v = self.unit()?;
        let plane = self.width * self.height;
        let mut out = vec![T::zero(); plane * 3];
        for p in 0..plane {
            for c in 0..3 {
                out[c * plane + p] = T::of(v[p * 3 + c] as f64);
            }
        }
        Ok(out)
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::InvalidImage(format!("{}: {e}", path.display())))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        Self::from_rgb8(w as usize, h as usize, img.into_raw(), Stage::Raw)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let data = match &self.pixels {
            Pixels::U8(v) => v.clone(),
            Pixels::F32(v) => v.iter().map(|x| (x * 255.0).round().clamp(0.0, 255.0) as u8).collect(),
        };
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, data)
            .ok_or_else(|| Error::InvalidImage("buffer size mismatch".into()))?;
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}
