use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{compute_final_mc, final_weight_for_target_mc, DryingConditions, DryingRecord, ImageRef, SliceSample};
use crate::error::{Error, Result};
use crate::imaging::SliceImage;

use super::kinetics::{simulate_final_mc, solve_drying_time, KineticsParams};
use super::render::{render_run_image, RenderSpec, SliceTruth};

/// Slice-to-slice spread of the fresh material and sensor noise levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariabilityParams {
    pub thickness_median: f64,
    pub thickness_cv: f64,
    pub diameter_median: f64,
    pub diameter_cv: f64,
    pub weight_cv: f64,
    pub initial_mc_mean: f64,
    pub initial_mc_sd: f64,
    /// g/cm^3
    pub density: f64,
    /// Intensity units.
    pub pixel_noise_sd: f64,
    pub browning_noise_sd: f64,
}

impl VariabilityParams {
    pub fn validate(&self) -> Result<()> {
        let spreads = [
            self.thickness_cv,
            self.diameter_cv,
            self.weight_cv,
            self.initial_mc_sd,
            self.pixel_noise_sd,
            self.browning_noise_sd,
        ];
        if spreads.iter().any(|v| !(*v >= 0.0))
            || self.thickness_median <= 0.0
            || self.diameter_median <= 0.0
            || self.density <= 0.0
            || !(self.initial_mc_mean > 0.0 && self.initial_mc_mean < 1.0)
        {
            return Err(Error::domain(format!("invalid variability parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunShape {
    pub slices: usize,
    pub repetitions: usize,
}

/// Full-factorial experiment plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentDesign {
    pub temperatures: Vec<f64>,
    pub velocities: Vec<f64>,
    pub mc_targets: Vec<f64>,
    pub runs: Vec<RunShape>,
    /// Bisection bracket for drying times, minutes.
    pub time_bounds: (f64, f64),
    /// Drying times are rounded to this many minutes.
    pub time_resolution: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignCell {
    pub temperature: f64,
    pub air_velocity: f64,
    pub mc_target: f64,
    pub slices: usize,
    pub repetitions: usize,
}

impl ExperimentDesign {
    pub fn cells(&self) -> Vec<DesignCell> {
        let mut out = Vec::new();
        for &temperature in &self.temperatures {
            for &air_velocity in &self.velocities {
                for &mc_target in &self.mc_targets {
                    for shape in &self.runs {
                        out.push(DesignCell {
                            temperature,
                            air_velocity,
                            mc_target,
                            slices: shape.slices,
                            repetitions: shape.repetitions,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn record_count(&self) -> usize {
        self.cells().iter().map(|c| c.slices * c.repetitions).sum()
    }

    /// First condition and target only, with `runs` runs of `slices` slices.
    pub fn reduced(&self, runs: usize, slices: usize) -> Self {
        Self {
            temperatures: self.temperatures.iter().copied().take(1).collect(),
            velocities: self.velocities.iter().copied().take(1).collect(),
            mc_targets: self.mc_targets.iter().copied().take(1).collect(),
            runs: vec![RunShape {
                slices,
                repetitions: runs,
            }],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.temperatures.is_empty() || self.velocities.is_empty() || self.mc_targets.is_empty() || self.runs.is_empty() {
            return Err(Error::domain("experiment design has an empty factor"));
        }
        if self.runs.iter().any(|r| r.slices == 0 || r.repetitions == 0) {
            return Err(Error::domain("runs need at least one slice and one repetition"));
        }
        if !(self.time_bounds.0 > 0.0 && self.time_bounds.1 > self.time_bounds.0) || self.time_resolution < 0.0 {
            return Err(Error::domain("invalid time bounds"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedRecord {
    pub record: DryingRecord,
    pub truth: SliceTruth,
    pub mc_target: f64,
}

#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub records: Vec<GeneratedRecord>,
}

impl GeneratedDataset {
    pub fn drying_records(&self) -> Vec<DryingRecord> {
        self.records.iter().map(|r| r.record.clone()).collect()
    }
}

fn lognormal<R: Rng + ?Sized>(rng: &mut R, median: f64, cv: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    median * (cv * z).exp()
}

fn draw_slice<R: Rng + ?Sized>(rng: &mut R, v: &VariabilityParams, hole_fraction: f64, run_id: &str, k: usize) -> SliceSample {
    let thickness = lognormal(rng, v.thickness_median, v.thickness_cv);
    let diameter = lognormal(rng, v.diameter_median, v.diameter_cv);
    let z: f64 = rng.sample(StandardNormal);
    let initial_mc = (v.initial_mc_mean + v.initial_mc_sd * z).clamp(0.5, 0.95);
    let area_mm2 = PI / 4.0 * diameter * diameter * (1.0 - hole_fraction * hole_fraction);
    let nominal = v.density * area_mm2 * thickness / 1000.0;
    let initial_weight = lognormal(rng, nominal, v.weight_cv);
    SliceSample {
        sample_id: format!("{run_id}-s{k}"),
        run_id: run_id.to_string(),
        initial_weight,
        final_weight: initial_weight,
        initial_mc,
        thickness: Some(thickness),
        diameter: Some(diameter),
    }
}

fn generate_run(
    cell: &DesignCell,
    run_index: usize,
    design: &ExperimentDesign,
    kinetics: &KineticsParams,
    variability: &VariabilityParams,
    render: &RenderSpec,
    seed: u64,
) -> Result<Vec<GeneratedRecord>> {
    // one ChaCha stream per run: generation order never changes the data
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_index as u64);
    let run_id = format!("r{run_index:03}");
    let mut slices: Vec<SliceSample> = (0..cell.slices)
        .map(|k| draw_slice(&mut rng, variability, render.core_hole_fraction, &run_id, k))
        .collect();
    let mut minutes = solve_drying_time(
        cell.temperature,
        cell.air_velocity,
        &slices,
        kinetics,
        cell.mc_target,
        design.time_bounds,
    )?;
    if design.time_resolution > 0.0 {
        // divide by the step count per minute so 0.1-minute grids print as 237.1, not 237.10000000000002
        minutes = (minutes / design.time_resolution).round() / design.time_resolution.recip();
    }
    let conditions = DryingConditions::new(cell.temperature, cell.air_velocity, minutes);
    let mut labels = Vec::with_capacity(slices.len());
    for s in slices.iter_mut() {
        let mc = simulate_final_mc(&conditions, s, kinetics, &mut rng)?;
        s.final_weight = final_weight_for_target_mc(s.initial_weight, s.initial_mc, mc)?;
        labels.push(compute_final_mc(s)?);
    }
    let pairs: Vec<(&SliceSample, f64)> = slices.iter().zip(labels.iter().copied()).collect();
    let rendered = render_run_image(&pairs, &conditions, render, variability, &mut rng)?;
    let image = Arc::new(rendered.image);
    let n = slices.len();
    Ok(slices
        .into_iter()
        .zip(labels)
        .zip(rendered.truths)
        .enumerate()
        .map(|(k, ((sample, mc), truth))| GeneratedRecord {
            record: DryingRecord {
                conditions,
                sample,
                image: ImageRef::Memory(Arc::clone(&image)),
                ground_truth_mc: mc,
                slices_in_run: n,
                slice_index: k,
            },
            truth,
            mc_target: cell.mc_target,
        })
        .collect())
}

/// Generates every run of the design. Deterministic for a fixed seed.
pub fn generate_dataset(
    design: &ExperimentDesign,
    kinetics: &KineticsParams,
    variability: &VariabilityParams,
    render: &RenderSpec,
    seed: u64,
) -> Result<GeneratedDataset> {
    design.validate()?;
    kinetics.validate()?;
    variability.validate()?;
    render.validate()?;
    let mut records = Vec::with_capacity(design.record_count());
    let mut run_index = 0;
    for cell in design.cells() {
        for _ in 0..cell.repetitions {
            records.extend(generate_run(&cell, run_index, design, kinetics, variability, render, seed)?);
            run_index += 1;
        }
    }
    Ok(GeneratedDataset { records })
}

/// Writes `manifest.csv` and `images/<sample_id>.png` under `out_dir`.
pub fn write_dataset(dataset: &GeneratedDataset, out_dir: &Path) -> Result<()> {
    let images = out_dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut rows = Vec::with_capacity(dataset.records.len());
    for g in &dataset.records {
        let rel = format!("images/{}.png", g.record.sample.sample_id);
        match &g.record.image {
            ImageRef::Memory(img) => img.save_png(&out_dir.join(&rel))?,
            ImageRef::Path(p) => {
                let img = SliceImage::load_png(p)?;
                img.save_png(&out_dir.join(&rel))?;
            }
        }
        rows.push(crate::io::ManifestRow::from_record(&g.record, &rel));
    }
    crate::io::write_manifest(&out_dir.join("manifest.csv"), &rows)
}
