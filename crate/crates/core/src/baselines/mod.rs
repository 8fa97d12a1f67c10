//! Benchmark models over low-dimensional design matrices: ordinary least
//! squares, a Gaussian process, a one-hidden-layer network, and the
//! parallel tabular + simple-feature fusion variant.

mod gp;
mod ols;
mod parallel;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{train, TrainedModel, TrainingConfig};
use crate::imaging::SimpleImageFeatures;
use crate::models::{InputSelect, Mlp, ModelInput};
use crate::pipeline::{PreparedRecord, Standardizer};

pub use gp::{fit_gp, log_marginal_likelihood, nelder_mead, Gp, GpConfig, GpHyper, GpModel};
pub use ols::{fit_ols, OlsModel};
pub use parallel::ParallelFusion;

/// How the image summary enters the standard-fusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageColumn {
    /// One column: `0.299 R + 0.587 G + 0.114 B` of the mean color.
    Luminance,
    /// Three columns, one per channel mean.
    PerChannel,
}

impl ImageColumn {
    pub fn values(&self, f: &SimpleImageFeatures) -> Vec<f64> {
        match self {
            ImageColumn::Luminance => vec![f.luminance(), f.area],
            ImageColumn::PerChannel => vec![f.mean_r, f.mean_g, f.mean_b, f.area],
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        match self {
            ImageColumn::Luminance => vec!["luminance", "area"],
            ImageColumn::PerChannel => vec!["mean_r", "mean_g", "mean_b", "area"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub image_column: ImageColumn,
    pub nn_hidden: usize,
    pub gp: GpConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignMode {
    /// `T, v, t`.
    TabularOnly,
    /// `T, v, t`, image summary, area.
    StandardFusion,
}

/// Unstandardized rows plus column names.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub mode: DesignMode,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    /// Statistics fitted on the given rows only.
    pub fn fit_standardizer(&self, rows: &[usize]) -> Result<Standardizer> {
        let subset: Vec<Vec<f64>> = rows.iter().map(|&i| self.rows[i].clone()).collect();
        Standardizer::fit(&subset)
    }

    pub fn standardized(&self, s: &Standardizer) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| s.apply(r)).collect()
    }
}

/// One record as the design-matrix builder sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignInput {
    pub tabular: [f64; 3],
    pub features: Option<SimpleImageFeatures>,
}

impl From<&PreparedRecord> for DesignInput {
    fn from(r: &PreparedRecord) -> Self {
        Self {
            tabular: r.tabular,
            features: Some(r.features),
        }
    }
}

pub fn build_design_matrix(records: &[DesignInput], mode: DesignMode, image_column: ImageColumn) -> Result<DesignMatrix> {
    let mut columns: Vec<String> = ["temperature", "air_velocity", "drying_time"].map(String::from).to_vec();
    if mode == DesignMode::StandardFusion {
        columns.extend(image_column.names().into_iter().map(String::from));
    }
    let mut rows = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let mut row = r.tabular.to_vec();
        if mode == DesignMode::StandardFusion {
            let f = r
                .features
                .ok_or_else(|| Error::MissingFeature(format!("record {i} has no image features")))?;
            row.extend(image_column.values(&f));
        }
        rows.push(row);
    }
    Ok(DesignMatrix { mode, columns, rows })
}

/// Fully connected `in -> hidden -> 1` network on standardized rows.
pub fn fit_nn(x: &[Vec<f64>], y: &[f64], hidden: usize, training: &TrainingConfig, seed: u64) -> Result<TrainedModel<Mlp<f32>>> {
    let d = x.first().map_or(0, |r| r.len());
    let inputs: Vec<ModelInput<f32>> = x.iter().map(|r| row_input(r)).collect();
    let ys: Vec<f32> = y.iter().map(|&v| v as f32).collect();
    let model = Mlp::new(InputSelect::Tabular, d, hidden, seed);
    train(model, &inputs, &ys, training, seed)
}

pub(crate) fn row_input(row: &[f64]) -> ModelInput<f32> {
    ModelInput {
        tabular: row.iter().map(|&v| v as f32).collect(),
        features: Vec::new(),
        image: None,
    }
}
