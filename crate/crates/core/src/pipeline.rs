//! Record preprocessing: calibration, segmentation, tensors and simple
//! features, plus fold-local standardization.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::ImagingConfig;
use crate::domain::{ConditionCombo, DryingRecord, ImageRef};
use crate::error::{Error, Result};
use crate::imaging::{
    calibrate_color, extract_simple_features, segment_slices, to_model_tensor, SimpleImageFeatures, SliceImage,
};

/// Everything the models and baselines need from one record.
#[derive(Debug, Clone)]
pub struct PreparedRecord {
    pub sample_id: String,
    pub run_id: String,
    pub combo: ConditionCombo,
    /// Raw (temperature, velocity, time).
    pub tabular: [f64; 3],
    pub features: SimpleImageFeatures,
    /// Channel-major 3x224x224 tensor in `[0, 1]`.
    pub tensor: Arc<Vec<f32>>,
    pub truth: f64,
    pub slices_in_run: usize,
    pub slice_index: usize,
}

fn load(image: &ImageRef) -> Result<SliceImage> {
    Ok(match image {
        ImageRef::Memory(img) => (**img).clone(),
        ImageRef::Path(p) => SliceImage::load_png(p)?,
    })
}

/// Masked images for every slice of a run image, left to right.
pub fn masked_slices(image: &SliceImage, slices: usize, cfg: &ImagingConfig) -> Result<Vec<SliceImage>> {
    let calibrated = calibrate_color(image, cfg.source_cct, cfg.target_cct)?;
    segment_slices(&calibrated, &cfg.segmenter, slices)
}

type SliceOutputs = Vec<(SimpleImageFeatures, Arc<Vec<f32>>)>;

/// Preprocesses records; images shared by a run are segmented once.
pub fn prepare_records(records: &[DryingRecord], cfg: &ImagingConfig) -> Result<Vec<PreparedRecord>> {
    let mut cache: HashMap<String, SliceOutputs> = HashMap::new();
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let run = &r.sample.run_id;
        if !cache.contains_key(run) {
            let masked = masked_slices(&load(&r.image)?, r.slices_in_run, cfg)?;
            let mut parts = Vec::with_capacity(masked.len());
            for m in &masked {
                let tensor = to_model_tensor(m)?;
                parts.push((extract_simple_features(m)?, Arc::new(tensor.to_chw::<f32>()?)));
            }
            cache.insert(run.clone(), parts);
        }
        let parts = &cache[run];
        let (features, tensor) = parts.get(r.slice_index).cloned().ok_or_else(|| {
            Error::InvalidImage(format!(
                "{}: found {} slices in the run image, need slice {}",
                r.sample.sample_id,
                parts.len(),
                r.slice_index + 1
            ))
        })?;
        out.push(PreparedRecord {
            sample_id: r.sample.sample_id.clone(),
            run_id: run.clone(),
            combo: r.conditions.combo(),
            tabular: r.conditions.as_array(),
            features,
            tensor,
            truth: r.ground_truth_mc,
            slices_in_run: r.slices_in_run,
            slice_index: r.slice_index,
        });
    }
    Ok(out)
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Constant columns get unit scale so they map to zero.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::domain("cannot standardize an empty set"));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::shape(format!("rows of length {d}"), "ragged rows"));
        }
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut sd = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in sd.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in sd.iter_mut() {
            *s = (*s / n as f64).sqrt();
            if !(*s > 1e-12) {
                *s = 1.0;
            }
        }
        Ok(Self { mean, sd })
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.sd)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.sd)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardized_columns_have_zero_mean_unit_sd() {
        let rows: Vec<Vec<f64>> = (0..17).map(|i| vec![i as f64 * 3.0 + 1.0, (i * i) as f64, 5.0]).collect();
        let s = Standardizer::fit(&rows).unwrap();
        let z: Vec<Vec<f64>> = rows.iter().map(|r| s.apply(r)).collect();
        for c in 0..2 {
            let m = z.iter().map(|r| r[c]).sum::<f64>() / 17.0;
            let v = z.iter().map(|r| (r[c] - m).powi(2)).sum::<f64>() / 17.0;
            assert!(m.abs() < 1e-9 && (v.sqrt() - 1.0).abs() < 1e-9);
        }
        assert!(z.iter().all(|r| r[2] == 0.0));
        let back = s.invert(&z[4]);
        for (a, b) in back.iter().zip(&rows[4]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
