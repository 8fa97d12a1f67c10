use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::rmse;

/// Out-of-fold prediction for one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordPrediction {
    pub sample_id: String,
    pub run_id: String,
    /// Held-out condition, e.g. `60C/1.5mps`.
    pub fold: String,
    pub prediction: f64,
    pub truth: f64,
}

/// Cross-validated predictions of one model configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub label: String,
    pub fold_rmse: Vec<(String, f64)>,
    pub average_rmse: f64,
    pub predictions: Vec<RecordPrediction>,
    /// Final training loss per fold.
    pub final_train_loss: Vec<f64>,
}

impl CvResult {
    /// Fold and average RMSE recomputed from the predictions; folds keep
    /// their first-appearance order.
    pub fn from_predictions(label: impl Into<String>, predictions: Vec<RecordPrediction>, final_train_loss: Vec<f64>) -> Result<Self> {
        let mut folds: Vec<String> = Vec::new();
        for p in &predictions {
            if !folds.contains(&p.fold) {
                folds.push(p.fold.clone());
            }
        }
        if folds.is_empty() {
            return Err(Error::domain("no predictions"));
        }
        let mut fold_rmse = Vec::with_capacity(folds.len());
        for f in folds {
            let (p, t): (Vec<f64>, Vec<f64>) = predictions
                .iter()
                .filter(|r| r.fold == f)
                .map(|r| (r.prediction, r.truth))
                .unzip();
            fold_rmse.push((f, rmse(&p, &t)?));
        }
        let average_rmse = fold_rmse.iter().map(|f| f.1).sum::<f64>() / fold_rmse.len() as f64;
        Ok(Self {
            label: label.into(),
            fold_rmse,
            average_rmse,
            predictions,
            final_train_loss,
        })
    }

    /// Rebuilds the summary from the stored predictions alone.
    pub fn recomputed(&self) -> Result<Self> {
        Self::from_predictions(self.label.clone(), self.predictions.clone(), self.final_train_loss.clone())
    }

    pub fn prediction_for(&self, sample_id: &str) -> Option<&RecordPrediction> {
        self.predictions.iter().find(|p| p.sample_id == sample_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub average_rmse: f64,
    /// `(other - reference) / other` in percent; absent on the reference row.
    pub reduction_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub first_column: String,
    pub rows: Vec<TableRow>,
}

impl Table {
    /// Rows for `results`, with reductions relative to `reference` when given.
    pub fn from_results(first_column: &str, results: &[CvResult], reference: Option<&CvResult>) -> Self {
        let rows = results
            .iter()
            .map(|r| TableRow {
                label: r.label.clone(),
                average_rmse: r.average_rmse,
                reduction_pct: reference
                    .filter(|f| f.label != r.label)
                    .map(|f| 100.0 * (r.average_rmse - f.average_rmse) / r.average_rmse),
            })
            .collect();
        Self {
            first_column: first_column.to_string(),
            rows,
        }
    }

    pub fn has_reductions(&self) -> bool {
        self.rows.iter().any(|r| r.reduction_pct.is_some())
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},Average RMSE", self.first_column);
        let red = self.has_reductions();
        if red {
            out.push_str(",RMSE reduction (%)");
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{:.4}", r.label, r.average_rmse));
            if red {
                out.push(',');
                if let Some(p) = r.reduction_pct {
                    out.push_str(&format!("{p:.1}"));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Fixed-width text rendering.
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).chain([self.first_column.len()]).max().unwrap_or(0);
        let red = self.has_reductions();
        let mut out = format!("{:<width$}  Average RMSE", self.first_column);
        if red {
            out.push_str("  RMSE reduction");
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{:<width$}  {:>12.4}", r.label, r.average_rmse));
            if red {
                match r.reduction_pct {
                    Some(p) => out.push_str(&format!("  {:>13.1}%", p)),
                    None => out.push_str(&format!("  {:>14}", "-")),
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Ablation,
    Baselines,
    RatioSweep,
    Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ReportKind,
    pub tool_version: String,
    pub config_hash: String,
    pub dataset_hash: String,
    pub seed: u64,
    /// Omitted in deterministic mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
    pub results: Vec<CvResult>,
    pub table: Table,
}

impl ExperimentReport {
    pub fn result(&self, label: &str) -> Option<&CvResult> {
        self.results.iter().find(|r| r.label == label)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(id: &str, fold: &str, p: f64, t: f64) -> RecordPrediction {
        RecordPrediction {
            sample_id: id.into(),
            run_id: "r".into(),
            fold: fold.into(),
            prediction: p,
            truth: t,
        }
    }

    #[test]
    fn average_is_mean_of_folds() {
        let r = CvResult::from_predictions(
            "m",
            vec![pred("a", "x", 0.1, 0.12), pred("b", "x", 0.2, 0.18), pred("c", "y", 0.3, 0.1)],
            vec![],
        )
        .unwrap();
        assert_eq!(r.fold_rmse.len(), 2);
        assert!((r.fold_rmse[0].1 - 0.02).abs() < 1e-15);
        assert!((r.average_rmse - (r.fold_rmse[0].1 + r.fold_rmse[1].1) / 2.0).abs() < 1e-12);
        assert_eq!(r.recomputed().unwrap(), r);
    }

    #[test]
    fn reduction_formula() {
        let mk = |label: &str, v: f64| CvResult {
            label: label.into(),
            fold_rmse: vec![],
            average_rmse: v,
            predictions: vec![],
            final_train_loss: vec![],
        };
        let fusion = mk("fusion", 0.0363);
        let t = Table::from_results("Model", &[mk("tab", 0.0450), fusion.clone()], Some(&fusion));
        assert!((t.rows[0].reduction_pct.unwrap() - 19.333).abs() < 1e-2);
        assert!(t.rows[1].reduction_pct.is_none());
        let csv = t.to_csv();
        assert!(csv.starts_with("Model,Average RMSE,RMSE reduction (%)\n"));
        assert!(csv.contains("tab,0.0450,19.3\n"));
        assert!(csv.contains("fusion,0.0363,\n"));
    }
}
