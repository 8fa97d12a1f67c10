use std::sync::Arc;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{build_design_matrix, fit_gp, fit_ols, DesignInput, DesignMode, ParallelFusion};
use crate::config::RunConfig;
use crate::error::Result;
use crate::models::{EncoderSpec, FusionConfig, FusionNet, ImageOnlyNet, InputSelect, Mlp, ModelInput, Regressor};
use crate::nn::avg_pool;
use crate::imaging::TENSOR_SIDE;
use crate::pipeline::{PreparedRecord, Standardizer};

use super::report::{CvResult, ExperimentReport, RecordPrediction, ReportKind, Table};
use super::{make_folds, train, FoldSplit, TrainingConfig};

pub const ABLATION_LABELS: [&str; 4] = [
    "Tabular",
    "Image only",
    "Tabular + simplified image features",
    "Multi-modal fusion",
];

pub const BASELINE_LABELS: [&str; 7] = [
    "Linear regression (tabular)",
    "Gaussian process (tabular)",
    "NN (tabular)",
    "Linear regression (tabular + image features)",
    "Gaussian process (tabular + image features)",
    "NN (tabular + image features)",
    "Multi-modal fusion",
];

/// A model configuration the cross-validation harness can train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSpec {
    Fusion { ratio: (u32, u32) },
    ImageOnly,
    ParallelFusion { ratio: (u32, u32) },
    Nn(DesignMode),
    Ols(DesignMode),
    Gp(DesignMode),
}

impl ModelSpec {
    fn uses_images(&self) -> bool {
        matches!(self, ModelSpec::Fusion { .. } | ModelSpec::ImageOnly)
    }
}

/// Independent seed for `(seed, fold, purpose)`.
pub fn derive_seed(seed: u64, fold: usize, purpose: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((fold as u64) << 8) | purpose);
    rng.next_u64()
}

fn fold_inputs(
    records: &[PreparedRecord],
    fold: &FoldSplit,
    cfg: &RunConfig,
    images: Option<&[Arc<Vec<f32>>]>,
) -> Result<Vec<ModelInput<f32>>> {
    let tab: Vec<Vec<f64>> = records.iter().map(|r| r.tabular.to_vec()).collect();
    let feats: Vec<Vec<f64>> = records.iter().map(|r| cfg.baselines.image_column.values(&r.features)).collect();
    let pick = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> { fold.train.iter().map(|&i| rows[i].clone()).collect() };
    let ts = Standardizer::fit(&pick(&tab))?;
    let fs = Standardizer::fit(&pick(&feats))?;
    Ok((0..records.len())
        .map(|i| ModelInput {
            tabular: ts.apply(&tab[i]).into_iter().map(|v| v as f32).collect(),
            features: fs.apply(&feats[i]).into_iter().map(|v| v as f32).collect(),
            image: images.map(|im| Arc::clone(&im[i])),
        })
        .collect())
}

fn design_inputs(records: &[PreparedRecord], fold: &FoldSplit, mode: DesignMode, cfg: &RunConfig) -> Result<Vec<Vec<f64>>> {
    let inputs: Vec<DesignInput> = records.iter().map(DesignInput::from).collect();
    let m = build_design_matrix(&inputs, mode, cfg.baselines.image_column)?;
    let s = m.fit_standardizer(&fold.train)?;
    Ok(m.standardized(&s))
}

fn fit_predict<M: Regressor<f32> + Clone>(
    model: M,
    inputs: &[ModelInput<f32>],
    records: &[PreparedRecord],
    fold: &FoldSplit,
    training: &TrainingConfig,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    let xs: Vec<ModelInput<f32>> = fold.train.iter().map(|&i| inputs[i].clone()).collect();
    let ys: Vec<f32> = fold.train.iter().map(|&i| records[i].truth as f32).collect();
    let trained = train(model, &xs, &ys, training, seed)?.check()?;
    let preds = fold
        .eval
        .iter()
        .map(|&i| trained.model.predict(&inputs[i]).map(|p| p as f64))
        .collect::<Result<Vec<_>>>()?;
    Ok((preds, trained.history.last().copied().unwrap_or(f64::NAN)))
}

fn fusion_config(cfg: &RunConfig, ratio: (u32, u32), seed: u64) -> FusionConfig {
    FusionConfig {
        ratio,
        seed,
        ..cfg.fusion.clone()
    }
}

/// Encoder-ready images, pooled once per preset.
pub fn prepared_images(records: &[PreparedRecord], cfg: &RunConfig) -> Vec<Arc<Vec<f32>>> {
    let spec = EncoderSpec::preset(cfg.fusion.encoder_preset);
    records
        .iter()
        .map(|r| Arc::new(avg_pool(&r.tensor, 3, TENSOR_SIDE, TENSOR_SIDE, spec.pre_pool)))
        .collect()
}

/// Condition-grouped cross-validation of one model configuration.
pub fn cross_validate(
    records: &[PreparedRecord],
    spec: ModelSpec,
    label: &str,
    cfg: &RunConfig,
    training: &TrainingConfig,
    progress: &dyn Fn(&str),
) -> Result<CvResult> {
    let combos: Vec<_> = records.iter().map(|r| r.combo).collect();
    let folds = make_folds(&combos)?;
    let images = spec.uses_images().then(|| prepared_images(records, cfg));
    let mut predictions = Vec::with_capacity(records.len());
    let mut losses = Vec::with_capacity(folds.len());
    for (k, fold) in folds.iter().enumerate() {
        let init_seed = derive_seed(cfg.fusion.seed, k, 0);
        let shuffle_seed = derive_seed(cfg.seed, k, 1);
        let (preds, loss) = match spec {
            ModelSpec::Fusion { ratio } => {
                let inputs = fold_inputs(records, fold, cfg, images.as_deref())?;
                let model = FusionNet::<f32>::new(&fusion_config(cfg, ratio, init_seed))?;
                fit_predict(model, &inputs, records, fold, training, shuffle_seed)?
            }
            ModelSpec::ImageOnly => {
                let inputs = fold_inputs(records, fold, cfg, images.as_deref())?;
                let model = ImageOnlyNet::<f32>::new(&fusion_config(cfg, cfg.fusion.ratio, init_seed))?;
                fit_predict(model, &inputs, records, fold, training, shuffle_seed)?
            }
            ModelSpec::ParallelFusion { ratio } => {
                let inputs = fold_inputs(records, fold, cfg, None)?;
                let dim = inputs[0].features.len();
                let model = ParallelFusion::<f32>::new(dim, &fusion_config(cfg, ratio, init_seed))?;
                fit_predict(model, &inputs, records, fold, training, shuffle_seed)?
            }
            ModelSpec::Nn(mode) => {
                let rows = design_inputs(records, fold, mode, cfg)?;
                let inputs: Vec<ModelInput<f32>> = rows.iter().map(|r| crate::baselines::row_input(r)).collect();
                let model = Mlp::<f32>::new(InputSelect::Tabular, rows[0].len(), cfg.baselines.nn_hidden, init_seed);
                fit_predict(model, &inputs, records, fold, training, shuffle_seed)?
            }
            ModelSpec::Ols(mode) => {
                let rows = design_inputs(records, fold, mode, cfg)?;
                let x: Vec<Vec<f64>> = fold.train.iter().map(|&i| rows[i].clone()).collect();
                let y: Vec<f64> = fold.train.iter().map(|&i| records[i].truth).collect();
                let m = fit_ols(&x, &y)?;
                let sse: f64 = x.iter().zip(&y).map(|(r, t)| (m.predict(r) - t).powi(2)).sum();
                (fold.eval.iter().map(|&i| m.predict(&rows[i])).collect(), sse / y.len() as f64)
            }
            ModelSpec::Gp(mode) => {
                let rows = design_inputs(records, fold, mode, cfg)?;
                let x: Vec<Vec<f64>> = fold.train.iter().map(|&i| rows[i].clone()).collect();
                let y: Vec<f64> = fold.train.iter().map(|&i| records[i].truth).collect();
                let m = fit_gp(&x, &y, &cfg.baselines.gp)?;
                let sse: f64 = x.iter().zip(&y).map(|(r, t)| (m.predict(r) - t).powi(2)).sum();
                (fold.eval.iter().map(|&i| m.predict(&rows[i])).collect(), sse / y.len() as f64)
            }
        };
        for (&i, p) in fold.eval.iter().zip(preds) {
            predictions.push(RecordPrediction {
                sample_id: records[i].sample_id.clone(),
                run_id: records[i].run_id.clone(),
                fold: fold.combo.to_string(),
                prediction: p,
                truth: records[i].truth,
            });
        }
        losses.push(loss);
        progress(&format!("{label}: fold {}/{} ({}) done", k + 1, folds.len(), fold.combo));
    }
    CvResult::from_predictions(label, predictions, losses)
}

fn report(
    kind: ReportKind,
    cfg: &RunConfig,
    dataset_hash: &str,
    started: Instant,
    results: Vec<CvResult>,
    table: Table,
) -> ExperimentReport {
    ExperimentReport {
        kind,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash(),
        dataset_hash: dataset_hash.to_string(),
        seed: cfg.seed,
        wall_clock_s: (!cfg.deterministic).then(|| started.elapsed().as_secs_f64()),
        results,
        table,
    }
}

/// Table rows in ablation order, reductions relative to the fusion row.
pub fn ablation_table(results: &[CvResult]) -> Result<Table> {
    let results: Vec<CvResult> = results.iter().map(|r| r.recomputed()).collect::<Result<_>>()?;
    let reference = results.iter().find(|r| r.label == ABLATION_LABELS[3]).cloned();
    Ok(Table::from_results("Dataset", &results, reference.as_ref()))
}

pub fn baseline_table(results: &[CvResult]) -> Result<Table> {
    let results: Vec<CvResult> = results.iter().map(|r| r.recomputed()).collect::<Result<_>>()?;
    let reference = results.iter().find(|r| r.label == BASELINE_LABELS[6]).cloned();
    Ok(Table::from_results("Model", &results, reference.as_ref()))
}

pub fn sweep_table(results: &[CvResult]) -> Result<Table> {
    let results: Vec<CvResult> = results.iter().map(|r| r.recomputed()).collect::<Result<_>>()?;
    Ok(Table::from_results("Tabular:image ratio", &results, None))
}

/// The four ablation arms under one training configuration.
pub fn run_ablation(records: &[PreparedRecord], cfg: &RunConfig, dataset_hash: &str, progress: &dyn Fn(&str)) -> Result<ExperimentReport> {
    let started = Instant::now();
    let ratio = cfg.fusion.ratio;
    let specs = [
        ModelSpec::Nn(DesignMode::TabularOnly),
        ModelSpec::ImageOnly,
        ModelSpec::ParallelFusion { ratio },
        ModelSpec::Fusion { ratio },
    ];
    let mut results = Vec::with_capacity(4);
    for (spec, label) in specs.into_iter().zip(ABLATION_LABELS) {
        results.push(cross_validate(records, spec, label, cfg, &cfg.training, progress)?);
    }
    let table = ablation_table(&results)?;
    Ok(report(ReportKind::Ablation, cfg, dataset_hash, started, results, table))
}

/// Linear regression, GP and NN on both design matrices, plus the fusion model.
pub fn run_baseline_suite(records: &[PreparedRecord], cfg: &RunConfig, dataset_hash: &str, progress: &dyn Fn(&str)) -> Result<ExperimentReport> {
    let started = Instant::now();
    let specs = [
        ModelSpec::Ols(DesignMode::TabularOnly),
        ModelSpec::Gp(DesignMode::TabularOnly),
        ModelSpec::Nn(DesignMode::TabularOnly),
        ModelSpec::Ols(DesignMode::StandardFusion),
        ModelSpec::Gp(DesignMode::StandardFusion),
        ModelSpec::Nn(DesignMode::StandardFusion),
        ModelSpec::Fusion { ratio: cfg.fusion.ratio },
    ];
    let mut results = Vec::with_capacity(7);
    for (spec, label) in specs.into_iter().zip(BASELINE_LABELS) {
        results.push(cross_validate(records, spec, label, cfg, &cfg.training, progress)?);
    }
    let table = baseline_table(&results)?;
    Ok(report(ReportKind::Baselines, cfg, dataset_hash, started, results, table))
}

/// One cross-validated fusion model per ratio.
pub fn run_ratio_sweep(
    records: &[PreparedRecord],
    ratios: &[(u32, u32)],
    cfg: &RunConfig,
    dataset_hash: &str,
    progress: &dyn Fn(&str),
) -> Result<ExperimentReport> {
    let started = Instant::now();
    let training = TrainingConfig {
        epochs: cfg.sweep.epochs.unwrap_or(cfg.training.epochs),
        ..cfg.training.clone()
    };
    let mut results = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        let label = format!("{}:{}", ratio.0, ratio.1);
        results.push(cross_validate(records, ModelSpec::Fusion { ratio }, &label, cfg, &training, progress)?);
    }
    let table = sweep_table(&results)?;
    Ok(report(ReportKind::RatioSweep, cfg, dataset_hash, started, results, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(42, 0, 0);
        assert_eq!(a, derive_seed(42, 0, 0));
        assert_ne!(a, derive_seed(42, 1, 0));
        assert_ne!(a, derive_seed(42, 0, 1));
        assert_ne!(a, derive_seed(43, 0, 0));
    }
}
