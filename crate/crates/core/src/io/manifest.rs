use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{check_record, compute_final_mc, DryingConditions, DryingRecord, ImageRef, SliceSample};
use crate::error::{Error, Result};
use crate::imaging::SliceImage;

/// One manifest line. Column names are part of the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRow {
    pub sample_id: String,
    pub run_id: String,
    #[serde(rename = "temperature_C")]
    pub temperature_c: f64,
    pub air_velocity_mps: f64,
    pub drying_time_min: f64,
    pub initial_weight_g: f64,
    pub final_weight_g: f64,
    pub initial_mc: f64,
    pub slices_in_run: usize,
    /// Relative to the manifest's directory.
    pub image_path: String,
}

impl ManifestRow {
    pub fn from_record(record: &DryingRecord, image_path: &str) -> Self {
        let c = &record.conditions;
        let s = &record.sample;
        Self {
            sample_id: s.sample_id.clone(),
            run_id: s.run_id.clone(),
            temperature_c: c.temperature,
            air_velocity_mps: c.air_velocity,
            drying_time_min: c.drying_time,
            initial_weight_g: s.initial_weight,
            final_weight_g: s.final_weight,
            initial_mc: s.initial_mc,
            slices_in_run: record.slices_in_run,
            image_path: image_path.to_string(),
        }
    }

    fn to_record(&self, root: &Path, slice_index: usize) -> DryingRecord {
        let sample = SliceSample {
            sample_id: self.sample_id.clone(),
            run_id: self.run_id.clone(),
            initial_weight: self.initial_weight_g,
            final_weight: self.final_weight_g,
            initial_mc: self.initial_mc,
            thickness: None,
            diameter: None,
        };
        let ground_truth_mc = compute_final_mc(&sample).unwrap_or(f64::NAN);
        DryingRecord {
            conditions: DryingConditions::new(self.temperature_c, self.air_velocity_mps, self.drying_time_min),
            sample,
            image: ImageRef::Path(root.join(&self.image_path)),
            ground_truth_mc,
            slices_in_run: self.slices_in_run,
            slice_index,
        }
    }
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    if !path.exists() {
        return Err(Error::Manifest(format!("{} does not exist", path.display())));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize::<ManifestRow>().enumerate() {
        rows.push(rec.map_err(|e| {
            let at = e
                .position()
                .map(|p| format!("line {}", p.line()))
                .unwrap_or_else(|| format!("row {}", i + 1));
            Error::Manifest(format!("{}: {at}: {e}", path.display()))
        })?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IngestOptions {
    /// Also enforce the factorial design levels.
    pub strict: bool,
    /// Drop invalid rows instead of failing.
    pub lenient: bool,
}

/// A problem with one manifest row; `row` counts data rows from 1, so the
/// file line is `row + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowIssue {
    pub row: usize,
    pub sample_id: String,
    pub message: String,
}

impl std::fmt::Display for RowIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "row {} ({}): {}", self.row, self.sample_id, self.message)
    }
}

/// A validated, ingested dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest_path: PathBuf,
    pub rows: Vec<ManifestRow>,
    pub records: Vec<DryingRecord>,
    /// Rows dropped in lenient mode.
    pub issues: Vec<RowIssue>,
    pub hash: String,
}

impl Dataset {
    pub fn combo_count(&self) -> usize {
        self.records.iter().map(|r| r.conditions.combo()).collect::<BTreeSet<_>>().len()
    }

    pub fn summary(&self) -> String {
        format!("{} records, {} condition combos", self.records.len(), self.combo_count())
    }
}

/// SHA-256 over the manifest bytes followed by every referenced image file, in row order.
pub fn dataset_hash(manifest_path: &Path, rows: &[ManifestRow]) -> Result<String> {
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let mut h = Sha256::new();
    let bytes = std::fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    h.update((bytes.len() as u64).to_le_bytes());
    h.update(&bytes);
    for r in rows {
        let p = root.join(&r.image_path);
        let img = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        h.update((img.len() as u64).to_le_bytes());
        h.update(&img);
    }
    Ok(hex::encode(h.finalize()))
}

/// Loads a manifest and validates every row and its image.
pub fn ingest_manifest(path: &Path, opts: IngestOptions) -> Result<Dataset> {
    let rows = read_manifest(path)?;
    let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    let mut runs: HashMap<&str, (usize, &ManifestRow)> = HashMap::new();
    let mut slice_index = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let row = i + 1;
        let mut push = |m: String| {
            issues.push(RowIssue {
                row,
                sample_id: r.sample_id.clone(),
                message: m,
            })
        };
        if !seen.insert(r.sample_id.as_str()) {
            push(format!("duplicate sample_id {}", r.sample_id));
        }
        let entry = runs.entry(r.run_id.as_str()).or_insert((0, r));
        let first = entry.1;
        if first.temperature_c != r.temperature_c
            || first.air_velocity_mps != r.air_velocity_mps
            || first.drying_time_min != r.drying_time_min
            || first.slices_in_run != r.slices_in_run
        {
            push(format!("conditions disagree with earlier rows of run {}", r.run_id));
        }
        slice_index.push(entry.0);
        entry.0 += 1;
        if entry.0 > r.slices_in_run {
            push(format!("run {} has more rows than slices_in_run = {}", r.run_id, r.slices_in_run));
        }
    }
    let mut records = Vec::with_capacity(rows.len());
    let mut bad_rows: BTreeSet<usize> = issues.iter().map(|i| i.row).collect();
    for (i, r) in rows.iter().enumerate() {
        let row = i + 1;
        let record = r.to_record(&root, slice_index[i]);
        for v in check_record(&record, opts.strict) {
            issues.push(RowIssue {
                row,
                sample_id: r.sample_id.clone(),
                message: v.message,
            });
            bad_rows.insert(row);
        }
        let image_path = root.join(&r.image_path);
        let image_issue = if !image_path.exists() {
            Some(format!("image {} does not exist", image_path.display()))
        } else {
            SliceImage::load_png(&image_path).err().map(|e| format!("image {} does not load: {e}", image_path.display()))
        };
        if let Some(m) = image_issue {
            issues.push(RowIssue {
                row,
                sample_id: r.sample_id.clone(),
                message: m,
            });
            bad_rows.insert(row);
        }
        if !bad_rows.contains(&row) {
            records.push(record);
        }
    }
    issues.sort_by_key(|i| i.row);
    if !issues.is_empty() && !opts.lenient {
        let lines: Vec<String> = issues.iter().map(|i| i.to_string()).collect();
        return Err(Error::Manifest(format!(
            "{}: {} invalid row(s)\n{}",
            path.display(),
            bad_rows.len(),
            lines.join("\n")
        )));
    }
    let hash = dataset_hash(path, &rows)
        .or_else(|_| Ok::<_, Error>(String::from("unavailable")))?;
    Ok(Dataset {
        manifest_path: path.to_path_buf(),
        rows,
        records,
        issues,
        hash,
    })
}
