//! Training loop, condition-grouped cross-validation and the experiment
//! runners (ablation, baseline suite, ratio sweep) with their analyses.

mod analysis;
mod folds;
mod report;
mod runner;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use analysis::{error_density, paired_slice_analysis, DensityBin, ErrorDensity, PairedReport, PairedRun};
pub use folds::{make_folds, FoldSplit};
pub use report::{CvResult, ExperimentReport, RecordPrediction, ReportKind, Table, TableRow};
pub use runner::{
    ablation_table, baseline_table, cross_validate, derive_seed, run_ablation, run_baseline_suite, run_ratio_sweep,
    prepared_images, sweep_table, ModelSpec, ABLATION_LABELS, BASELINE_LABELS,
};
pub use train::{rmse, train, TrainedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 300,
            learning_rate: 1e-4,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("invalid training settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Tabular : image ratios, one table row each.
    pub ratios: Vec<(u32, u32)>,
    /// Epoch override for sweep runs; the training setting applies when absent.
    #[serde(default)]
    pub epochs: Option<usize>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.is_empty() || self.ratios.iter().any(|&(a, b)| a == 0 || b == 0) {
            return Err(Error::Config("sweep ratios must be non-empty and positive".into()));
        }
        if self.epochs == Some(0) {
            return Err(Error::Config("sweep epochs must be at least 1".into()));
        }
        Ok(())
    }
}
