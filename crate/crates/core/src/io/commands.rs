//! The work behind each CLI subcommand, callable from tests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiments::{
    error_density, paired_slice_analysis, run_ablation, run_baseline_suite, run_ratio_sweep, train, CvResult,
    ExperimentReport, RecordPrediction, ReportKind, Table, ABLATION_LABELS,
};
use crate::imaging::SliceImage;
use crate::models::{Checkpoint, FusionConfig, FusionNet, ModelInput, ModelKind, Regressor};
use crate::pipeline::{masked_slices, prepare_records, PreparedRecord, Standardizer};
use crate::simulator::{generate_dataset, write_dataset};

use super::manifest::{dataset_hash, ingest_manifest, read_manifest, Dataset, IngestOptions};
use super::plot::{bounds, Canvas, PALETTE};

pub type Progress<'a> = &'a dyn Fn(&str);

/// Artifact layout under one root directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub root: PathBuf,
}

impl Artifacts {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn fusion_checkpoint(&self) -> PathBuf {
        self.models().join("fusion.ckpt")
    }
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn provenance_line(cfg: &RunConfig, dataset_hash: &str) -> String {
    format!(
        "# mcfusion {} config={} dataset={} seed={}\n",
        env!("CARGO_PKG_VERSION"),
        cfg.hash(),
        dataset_hash,
        cfg.seed
    )
}

/// Marks a report as incomplete until `finish` is called.
struct Pending {
    marker: PathBuf,
}

impl Pending {
    fn start(dir: &Path, name: &str) -> Result<Self> {
        create_dir(dir)?;
        let marker = dir.join(format!("{name}.incomplete"));
        write(&marker, "")?;
        Ok(Self { marker })
    }

    fn finish(self) -> Result<()> {
        std::fs::remove_file(&self.marker).map_err(|e| Error::io(&self.marker, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub records: usize,
    pub manifest: PathBuf,
    pub dataset_hash: String,
}

/// Generates the synthetic dataset. `runs`/`slices` replace the design with
/// that many runs of that many slices at the first condition and target.
pub fn cmd_simulate(cfg: &RunConfig, out_dir: &Path, runs: Option<usize>, slices: Option<usize>) -> Result<SimulateSummary> {
    let sim = &cfg.simulator;
    let design = match (runs, slices) {
        (None, None) => sim.design.clone(),
        (r, s) => sim.design.reduced(r.unwrap_or(1), s.unwrap_or(1)),
    };
    let ds = generate_dataset(&design, &sim.kinetics, &sim.variability, &sim.render, cfg.seed)?;
    create_dir(out_dir)?;
    write_dataset(&ds, out_dir)?;
    let manifest = out_dir.join("manifest.csv");
    let rows = read_manifest(&manifest)?;
    Ok(SimulateSummary {
        records: ds.records.len(),
        dataset_hash: dataset_hash(&manifest, &rows)?,
        manifest,
    })
}

pub fn cmd_ingest(manifest: &Path, opts: IngestOptions) -> Result<Dataset> {
    ingest_manifest(manifest, opts)
}

/// Writes `features.csv` and a mask preview per record.
pub fn cmd_preprocess(dataset: &Dataset, cfg: &RunConfig, artifacts: &Artifacts) -> Result<PathBuf> {
    let masks_dir = artifacts.root.join("masks");
    create_dir(&masks_dir)?;
    let prepared = prepare_records(&dataset.records, &cfg.imaging)?;
    let mut csv = provenance_line(cfg, &dataset.hash);
    csv.push_str("sample_id,mean_r,mean_g,mean_b,luminance,area_px\n");
    for p in &prepared {
        let f = &p.features;
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{}\n",
            p.sample_id,
            f.mean_r,
            f.mean_g,
            f.mean_b,
            f.luminance(),
            f.area
        ));
    }
    for r in &dataset.records {
        let img = match &r.image {
            crate::domain::ImageRef::Path(p) => SliceImage::load_png(p)?,
            crate::domain::ImageRef::Memory(m) => (**m).clone(),
        };
        let masked = masked_slices(&img, r.slices_in_run, &cfg.imaging)?;
        if let Some(m) = masked.get(r.slice_index) {
            let mask = m.mask.as_ref().expect("masked stage");
            let mut preview = m.rgb8()?.to_vec();
            for (px, &inside) in preview.chunks_exact_mut(3).zip(&mask.bits) {
                if !inside {
                    px.iter_mut().for_each(|v| *v /= 4);
                }
            }
            SliceImage::from_rgb8(m.width, m.height, preview, crate::imaging::Stage::Raw)?
                .save_png(&masks_dir.join(format!("{}.png", r.sample.sample_id)))?;
        }
    }
    let path = artifacts.root.join("features.csv");
    write(&path, csv)?;
    Ok(path)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FusionExtra {
    tool_version: String,
    config_hash: String,
    dataset_hash: String,
    seed: u64,
    tabular: Standardizer,
    features: Standardizer,
    history: Vec<f64>,
}

fn standardizers(records: &[PreparedRecord], cfg: &RunConfig) -> Result<(Standardizer, Standardizer)> {
    let tab: Vec<Vec<f64>> = records.iter().map(|r| r.tabular.to_vec()).collect();
    let feats: Vec<Vec<f64>> = records.iter().map(|r| cfg.baselines.image_column.values(&r.features)).collect();
    Ok((Standardizer::fit(&tab)?, Standardizer::fit(&feats)?))
}

fn inputs(records: &[PreparedRecord], cfg: &RunConfig, ts: &Standardizer, fs: &Standardizer) -> Vec<ModelInput<f32>> {
    let images = crate::experiments::prepared_images(records, cfg);
    records
        .iter()
        .zip(images)
        .map(|(r, img)| ModelInput {
            tabular: ts.apply(&r.tabular).into_iter().map(|v| v as f32).collect(),
            features: fs.apply(&cfg.baselines.image_column.values(&r.features)).into_iter().map(|v| v as f32).collect(),
            image: Some(img),
        })
        .collect()
}

/// Trains the fusion model on every record and saves a checkpoint.
pub fn cmd_train(dataset: &Dataset, cfg: &RunConfig, artifacts: &Artifacts, progress: Progress) -> Result<PathBuf> {
    let prepared = prepare_records(&dataset.records, &cfg.imaging)?;
    let (ts, fs) = standardizers(&prepared, cfg)?;
    let xs = inputs(&prepared, cfg, &ts, &fs);
    let ys: Vec<f32> = prepared.iter().map(|r| r.truth as f32).collect();
    progress(&format!("training fusion model on {} records", xs.len()));
    let model = FusionNet::<f32>::new(&cfg.fusion)?;
    let trained = train(model, &xs, &ys, &cfg.training, cfg.seed)?.check()?;
    let extra = FusionExtra {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash(),
        dataset_hash: dataset.hash.clone(),
        seed: cfg.seed,
        tabular: ts,
        features: fs,
        history: trained.history,
    };
    let ck = Checkpoint::from_model(
        ModelKind::Fusion,
        serde_json::to_value(&cfg.fusion)?,
        &trained.model,
        serde_json::to_value(&extra)?,
    );
    let path = artifacts.fusion_checkpoint();
    ck.save(&path)?;
    Ok(path)
}

/// Predicts every record with a saved fusion checkpoint.
pub fn cmd_evaluate(dataset: &Dataset, cfg: &RunConfig, checkpoint: &Path, artifacts: &Artifacts) -> Result<ExperimentReport> {
    let ck = Checkpoint::load(checkpoint)?;
    if ck.header.kind != ModelKind::Fusion {
        return Err(Error::Checkpoint(format!("expected a fusion checkpoint, got {:?}", ck.header.kind)));
    }
    let fusion: FusionConfig = serde_json::from_value(ck.header.config.clone())?;
    let extra: FusionExtra = serde_json::from_value(ck.header.extra.clone())?;
    let mut model = FusionNet::<f32>::new(&fusion)?;
    ck.load_into(&mut model)?;
    let mut eval_cfg = cfg.clone();
    eval_cfg.fusion = fusion;
    let prepared = prepare_records(&dataset.records, &eval_cfg.imaging)?;
    let xs = inputs(&prepared, &eval_cfg, &extra.tabular, &extra.features);
    let mut predictions = Vec::with_capacity(xs.len());
    for (r, x) in prepared.iter().zip(&xs) {
        predictions.push(RecordPrediction {
            sample_id: r.sample_id.clone(),
            run_id: r.run_id.clone(),
            fold: r.combo.to_string(),
            prediction: model.predict(x)? as f64,
            truth: r.truth,
        });
    }
    let result = CvResult::from_predictions("Multi-modal fusion", predictions, vec![])?;
    let table = Table::from_results("Model", std::slice::from_ref(&result), None);
    let report = ExperimentReport {
        kind: ReportKind::Evaluation,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash(),
        dataset_hash: dataset.hash.clone(),
        seed: cfg.seed,
        wall_clock_s: None,
        results: vec![result],
        table,
    };
    save_report(&report, "evaluation", cfg, artifacts)?;
    Ok(report)
}

fn save_report(report: &ExperimentReport, name: &str, cfg: &RunConfig, artifacts: &Artifacts) -> Result<()> {
    let dir = artifacts.reports();
    create_dir(&dir)?;
    write(&dir.join(format!("{name}.json")), report.to_json())?;
    let mut csv = provenance_line(cfg, &report.dataset_hash);
    csv.push_str(&report.table.to_csv());
    write(&dir.join(format!("{name}.csv")), csv)
}

/// Four-arm ablation plus its error-density and paired-slice analyses.
pub fn cmd_ablate(dataset: &Dataset, cfg: &RunConfig, artifacts: &Artifacts, progress: Progress) -> Result<ExperimentReport> {
    let pending = Pending::start(&artifacts.reports(), "ablation")?;
    let prepared = prepare_records(&dataset.records, &cfg.imaging)?;
    let report = run_ablation(&prepared, cfg, &dataset.hash, progress)?;
    save_report(&report, "ablation", cfg, artifacts)?;
    let dir = artifacts.reports();
    let density = error_density(&report.results, 0.01);
    write(&dir.join("error_density.json"), serde_json::to_string_pretty(&density)? + "\n")?;
    if let (Some(t), Some(f)) = (report.result(ABLATION_LABELS[0]), report.result(ABLATION_LABELS[3])) {
        let paired = paired_slice_analysis(&prepared, t, f);
        write(&dir.join("paired_slices.json"), serde_json::to_string_pretty(&paired)? + "\n")?;
    }
    pending.finish()?;
    Ok(report)
}

pub fn cmd_sweep_ratio(
    dataset: &Dataset,
    cfg: &RunConfig,
    ratios: Option<&[(u32, u32)]>,
    artifacts: &Artifacts,
    progress: Progress,
) -> Result<ExperimentReport> {
    let pending = Pending::start(&artifacts.reports(), "ratio_sweep")?;
    let prepared = prepare_records(&dataset.records, &cfg.imaging)?;
    let ratios = ratios.unwrap_or(&cfg.sweep.ratios);
    let report = run_ratio_sweep(&prepared, ratios, cfg, &dataset.hash, progress)?;
    save_report(&report, "ratio_sweep", cfg, artifacts)?;
    pending.finish()?;
    Ok(report)
}

pub fn cmd_baselines(dataset: &Dataset, cfg: &RunConfig, artifacts: &Artifacts, progress: Progress) -> Result<ExperimentReport> {
    let pending = Pending::start(&artifacts.reports(), "baselines")?;
    let prepared = prepare_records(&dataset.records, &cfg.imaging)?;
    let report = run_baseline_suite(&prepared, cfg, &dataset.hash, progress)?;
    save_report(&report, "baselines", cfg, artifacts)?;
    pending.finish()?;
    Ok(report)
}

fn load_report(path: &Path) -> Result<Option<ExperimentReport>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(Some(serde_json::from_str(&text)?))
}

fn scatter_plot(report: &ExperimentReport, path: &Path) -> Result<()> {
    let all = report.results.iter().flat_map(|r| r.predictions.iter().flat_map(|p| [p.prediction, p.truth]));
    let b = bounds(all);
    let mut c = Canvas::new(b, b);
    c.line((b.0, b.0), (b.1, b.1), [160, 160, 160]);
    for (k, r) in report.results.iter().enumerate() {
        for p in &r.predictions {
            c.point((p.truth, p.prediction), PALETTE[k % PALETTE.len()]);
        }
    }
    c.save(path)
}

fn density_plot(report: &ExperimentReport, path: &Path) -> Result<()> {
    let d = error_density(&report.results, 0.01);
    let xb = bounds(d.iter().flat_map(|e| e.bins.iter().map(|b| b.center)));
    let yb = bounds(d.iter().flat_map(|e| e.bins.iter().map(|b| b.density)).chain([0.0]));
    let mut c = Canvas::new((xb.0 - 0.01, xb.1 + 0.01), yb);
    for (k, e) in d.iter().enumerate() {
        let pts: Vec<(f64, f64)> = e.bins.iter().map(|b| (b.center, b.density)).collect();
        c.polyline(&pts, PALETTE[k % PALETTE.len()]);
    }
    c.save(path)
}

fn trend_plot(report: &ExperimentReport, path: &Path) -> Result<()> {
    let pts: Vec<(f64, f64)> = report
        .table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (i as f64, r.average_rmse))
        .collect();
    let mut c = Canvas::new(bounds(pts.iter().map(|p| p.0)), bounds(pts.iter().map(|p| p.1).chain([0.0])));
    c.polyline(&pts, PALETTE[0]);
    c.save(path)
}

/// Renders every saved report as text and writes the plots.
pub fn cmd_report(artifacts: &Artifacts) -> Result<String> {
    let dir = artifacts.reports();
    let plots = dir.join("plots");
    let mut out = String::new();
    let mut found = false;
    for (name, title) in [
        ("baselines", "Baseline comparison"),
        ("ablation", "Ablation"),
        ("ratio_sweep", "Tabular-to-image ratio sweep"),
        ("evaluation", "Checkpoint evaluation"),
    ] {
        let Some(report) = load_report(&dir.join(format!("{name}.json")))? else {
            continue;
        };
        found = true;
        create_dir(&plots)?;
        let incomplete = dir.join(format!("{name}.incomplete")).exists();
        out.push_str(&format!(
            "{title}{}\n  config {}  dataset {}  seed {}\n",
            if incomplete { " (INCOMPLETE)" } else { "" },
            &report.config_hash[..12.min(report.config_hash.len())],
            &report.dataset_hash[..12.min(report.dataset_hash.len())],
            report.seed
        ));
        out.push_str(&report.table.to_text());
        out.push('\n');
        match report.kind {
            ReportKind::RatioSweep => trend_plot(&report, &plots.join("ratio_trend.png"))?,
            _ => {
                scatter_plot(&report, &plots.join(format!("{name}_scatter.png")))?;
                if report.kind == ReportKind::Ablation {
                    density_plot(&report, &plots.join("error_density.png"))?;
                }
            }
        }
    }
    if !found {
        return Err(Error::Config(format!("no reports under {}", dir.display())));
    }
    write(&dir.join("summary.txt"), &out)?;
    Ok(out)
}
