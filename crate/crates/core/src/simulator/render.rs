use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{DryingConditions, SliceSample};
use crate::error::{Error, Result};
use crate::imaging::{ChannelGains, Mask, SliceImage, Stage};

use super::{VariabilityParams, KELVIN};

/// Canvas, palette and optics of the synthetic top-down camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSpec {
    pub width: usize,
    pub height: usize,
    pub background: [u8; 3],
    /// Scene color of a fresh slice (under the reference white).
    pub base_slice_color: [u8; 3],
    /// Scene color of a fully browned slice.
    pub browning_color: [u8; 3],
    /// Core hole diameter over slice diameter.
    pub core_hole_fraction: f64,
    /// Radius scales with `(final_weight / initial_weight)^shrinkage_exponent`.
    pub shrinkage_exponent: f64,
    pub px_per_mm: f64,
    /// Illuminant the raw images are shot under, kelvin.
    pub capture_cct: f64,
    /// White point the scene colors are defined against, kelvin.
    pub reference_cct: f64,
    /// Process browning rate at the reference temperature, 1/min.
    pub browning_rate: f64,
    pub browning_activation_temperature: f64,
    pub browning_reference_temperature: f64,
    /// Weight of the time/temperature browning term.
    pub process_weight: f64,
    /// Weight of the moisture-loss browning term.
    pub dryness_weight: f64,
    /// Relative amplitude of the random boundary wobble.
    pub boundary_amplitude: f64,
}

impl RenderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 256 || self.height < 256 {
            return Err(Error::domain(format!(
                "canvas {}x{} is below the 256x256 minimum",
                self.width, self.height
            )));
        }
        if !(0.0..1.0).contains(&self.core_hole_fraction) || self.px_per_mm <= 0.0 || self.shrinkage_exponent < 0.0 {
            return Err(Error::domain("invalid slice geometry parameters"));
        }
        Ok(())
    }

    /// Same scene at `factor` times the resolution.
    pub fn scaled(&self, factor: usize) -> Self {
        Self {
            width: self.width * factor,
            height: self.height * factor,
            px_per_mm: self.px_per_mm * factor as f64,
            ..self.clone()
        }
    }
}

/// Browning index in `[0, 1]`: a time/temperature term plus a moisture-loss term.
pub fn browning_index(final_mc: f64, initial_mc: f64, conditions: &DryingConditions, spec: &RenderSpec) -> f64 {
    let arrhenius = (-spec.browning_activation_temperature
        * (1.0 / (conditions.temperature + KELVIN) - 1.0 / (spec.browning_reference_temperature + KELVIN)))
        .exp();
    let process = 1.0 - (-spec.browning_rate * arrhenius * conditions.drying_time.max(0.0)).exp();
    let dryness = ((initial_mc - final_mc) / initial_mc).clamp(0.0, 1.0);
    (spec.process_weight * process + spec.dryness_weight * dryness).clamp(0.0, 1.0)
}

/// Geometry and scene color of one slice to draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceDraw {
    pub center: (f64, f64),
    pub outer_radius: f64,
    pub hole_fraction: f64,
    pub fill: [f64; 3],
    /// `(harmonic, amplitude, phase)` terms of the boundary wobble.
    pub wobble: Vec<(f64, f64, f64)>,
}

impl SliceDraw {
    fn radius_at(&self, theta: f64) -> f64 {
        let w: f64 = self.wobble.iter().map(|&(h, a, p)| a * (h * theta + p).cos()).sum();
        self.outer_radius * (1.0 + w)
    }
}

/// Ground truth the renderer knows about each slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceTruth {
    /// Filled outline, core hole included.
    pub mask: Mask,
    pub outer_radius: f64,
    pub browning_index: f64,
    pub fill: [f64; 3],
    /// Noise-free mean scene color over `mask` (hole pixels show background).
    pub scene_mean: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct RenderedImage {
    pub image: SliceImage,
    pub truths: Vec<SliceTruth>,
}

/// Rasterizes slices onto the background, applies the capture illuminant
/// cast and per-pixel Gaussian noise.
pub fn draw_slices<R: Rng + ?Sized>(
    spec: &RenderSpec,
    slices: &[SliceDraw],
    pixel_noise_sd: f64,
    rng: &mut R,
) -> Result<RenderedImage> {
    let (w, h) = (spec.width, spec.height);
    let bg = spec.background.map(f64::from);
    let mut scene = vec![0f64; w * h * 3];
    for px in scene.chunks_exact_mut(3) {
        px.copy_from_slice(&bg);
    }
    let mut truths = Vec::with_capacity(slices.len());
    for s in slices {
        let mut mask = Mask::new(w, h);
        let reach = s.outer_radius * (1.0 + s.wobble.iter().map(|t| t.1.abs()).sum::<f64>()) + 2.0;
        let x0 = (s.center.0 - reach).floor().max(0.0) as usize;
        let x1 = ((s.center.0 + reach).ceil() as usize).min(w);
        let y0 = (s.center.1 - reach).floor().max(0.0) as usize;
        let y1 = ((s.center.1 + reach).ceil() as usize).min(h);
        let mut sum = [0f64; 3];
        let mut n = 0usize;
        for y in y0..y1 {
            for x in x0..x1 {
                let dx = x as f64 + 0.5 - s.center.0;
                let dy = y as f64 + 0.5 - s.center.1;
                let d = (dx * dx + dy * dy).sqrt();
                let r = s.radius_at(dy.atan2(dx));
                if d <= r {
                    mask.set(x, y, true);
                    let i = (y * w + x) * 3;
                    if d > s.hole_fraction * r {
                        scene[i..i + 3].copy_from_slice(&s.fill);
                    }
                    for c in 0..3 {
                        sum[c] += scene[i + c];
                    }
                    n += 1;
                }
            }
        }
        truths.push(SliceTruth {
            mask,
            outer_radius: s.outer_radius,
            browning_index: f64::NAN,
            fill: s.fill,
            scene_mean: sum.map(|v| v / n.max(1) as f64),
        });
    }

    // scene colors are defined under the reference white; the camera sees the capture illuminant
    let cast = ChannelGains::between(spec.reference_cct, spec.capture_cct)?;
    let noise = if pixel_noise_sd > 0.0 {
        Some(Normal::new(0.0, pixel_noise_sd).map_err(|e| Error::domain(e.to_string()))?)
    } else {
        None
    };
    let mut raw = vec![0u8; w * h * 3];
    for (i, v) in scene.iter().enumerate() {
        let e = noise.map_or(0.0, |n| n.sample(rng));
        raw[i] = (v * cast.0[i % 3] + e).round().clamp(0.0, 255.0) as u8;
    }
    Ok(RenderedImage {
        image: SliceImage::from_rgb8(w, h, raw, Stage::Raw)?,
        truths,
    })
}

fn mix(a: [u8; 3], b: [u8; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|c| a[c] as f64 + t * (b[c] as f64 - a[c] as f64))
}

/// Renders every slice of a run, left to right in the given order.
pub fn render_run_image<R: Rng + ?Sized>(
    slices: &[(&SliceSample, f64)],
    conditions: &DryingConditions,
    spec: &RenderSpec,
    variability: &VariabilityParams,
    rng: &mut R,
) -> Result<RenderedImage> {
    spec.validate()?;
    let n = slices.len().max(1) as f64;
    let mut draws = Vec::with_capacity(slices.len());
    let mut indices = Vec::with_capacity(slices.len());
    for (k, &(sample, final_mc)) in slices.iter().enumerate() {
        if !(0.0..1.0).contains(&final_mc) {
            return Err(Error::domain(format!("final MC {final_mc} outside [0, 1)")));
        }
        let diameter = sample.diameter.ok_or_else(|| {
            Error::domain(format!("sample {} has no diameter", sample.sample_id))
        })?;
        let mass_ratio = (1.0 - sample.initial_mc) / (1.0 - final_mc);
        let radius = 0.5 * diameter * spec.px_per_mm * mass_ratio.min(1.0).powf(spec.shrinkage_exponent);
        let mut beta = browning_index(final_mc, sample.initial_mc, conditions, spec);
        if variability.browning_noise_sd > 0.0 {
            let e: f64 = rng.sample(StandardNormal);
            beta = (beta + variability.browning_noise_sd * e).clamp(0.0, 1.0);
        }
        let mut wobble = Vec::with_capacity(3);
        for harmonic in 2..=4 {
            let a: f64 = rng.sample(StandardNormal);
            let phase = rng.random_range(0.0..2.0 * PI);
            wobble.push((
                harmonic as f64,
                spec.boundary_amplitude * a.clamp(-2.0, 2.0) / 3.0,
                phase,
            ));
        }
        draws.push(SliceDraw {
            center: ((k as f64 + 0.5) * spec.width as f64 / n, 0.5 * spec.height as f64),
            outer_radius: radius,
            hole_fraction: spec.core_hole_fraction,
            fill: mix(spec.base_slice_color, spec.browning_color, beta),
            wobble,
        });
        indices.push(beta);
    }
    let mut out = draw_slices(spec, &draws, variability.pixel_noise_sd, rng)?;
    for (t, beta) in out.truths.iter_mut().zip(indices) {
        t.browning_index = beta;
    }
    Ok(out)
}

/// Renders a single slice centered on the canvas.
pub fn render_slice_image<R: Rng + ?Sized>(
    sample: &SliceSample,
    final_mc: f64,
    conditions: &DryingConditions,
    spec: &RenderSpec,
    variability: &VariabilityParams,
    rng: &mut R,
) -> Result<RenderedImage> {
    let mut out = render_run_image(&[(sample, final_mc)], conditions, spec, variability, rng)?;
    out.image.sample_id = Some(sample.sample_id.clone());
    Ok(out)
}
