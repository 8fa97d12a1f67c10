use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::pipeline::PreparedRecord;

use super::report::CvResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRun {
    pub run_id: String,
    pub samples: [String; 2],
    pub truths: [f64; 2],
    pub tabular: [f64; 2],
    pub fusion: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedReport {
    pub runs: Vec<PairedRun>,
    /// Whether the tabular-only model gave both slices of every run the same value.
    pub tabular_identical: bool,
    /// Mean absolute per-slice error over the paired runs.
    pub tabular_mae: f64,
    pub fusion_mae: f64,
}

/// Compares per-slice predictions within two-slice runs.
pub fn paired_slice_analysis(records: &[PreparedRecord], tabular: &CvResult, fusion: &CvResult) -> PairedReport {
    let mut by_run: BTreeMap<&str, Vec<&PreparedRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.slices_in_run == 2) {
        by_run.entry(r.run_id.as_str()).or_default().push(r);
    }
    let mut runs = Vec::new();
    for (run_id, mut members) in by_run {
        if members.len() != 2 {
            continue;
        }
        members.sort_by_key(|r| r.slice_index);
        let get = |res: &CvResult, r: &PreparedRecord| res.prediction_for(&r.sample_id).map(|p| p.prediction);
        let (Some(ta), Some(tb), Some(fa), Some(fb)) = (
            get(tabular, members[0]),
            get(tabular, members[1]),
            get(fusion, members[0]),
            get(fusion, members[1]),
        ) else {
            continue;
        };
        runs.push(PairedRun {
            run_id: run_id.to_string(),
            samples: [members[0].sample_id.clone(), members[1].sample_id.clone()],
            truths: [members[0].truth, members[1].truth],
            tabular: [ta, tb],
            fusion: [fa, fb],
        });
    }
    let mae = |f: &dyn Fn(&PairedRun) -> [f64; 2]| -> f64 {
        if runs.is_empty() {
            return 0.0;
        }
        let total: f64 = runs
            .iter()
            .map(|r| {
                let p = f(r);
                (p[0] - r.truths[0]).abs() + (p[1] - r.truths[1]).abs()
            })
            .sum();
        total / (2 * runs.len()) as f64
    };
    PairedReport {
        tabular_identical: runs.iter().all(|r| r.tabular[0] == r.tabular[1]),
        tabular_mae: mae(&|r| r.tabular),
        fusion_mae: mae(&|r| r.fusion),
        runs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityBin {
    pub center: f64,
    pub count: usize,
    /// Count normalized so the histogram integrates to one.
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDensity {
    pub label: String,
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    /// Distance between the 5th and 95th percentiles.
    pub central_90_width: f64,
    pub bin_width: f64,
    pub bins: Vec<DensityBin>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Histogram of `prediction - truth` per result, with bins centered on
/// multiples of `bin_width` so zero error has its own bin.
pub fn error_density(results: &[CvResult], bin_width: f64) -> Vec<ErrorDensity> {
    results
        .iter()
        .map(|r| {
            let errors: Vec<f64> = r.predictions.iter().map(|p| p.prediction - p.truth).collect();
            let n = errors.len().max(1) as f64;
            let mean = errors.iter().sum::<f64>() / n;
            let sd = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
            let mut sorted = errors.clone();
            sorted.sort_by(f64::total_cmp);
            let central_90_width = if sorted.is_empty() {
                0.0
            } else {
                quantile(&sorted, 0.95) - quantile(&sorted, 0.05)
            };
            let reach = errors.iter().map(|e| (e / bin_width).round().abs() as i64).max().unwrap_or(0);
            let mut counts = vec![0usize; (2 * reach + 1) as usize];
            for e in &errors {
                counts[((e / bin_width).round() as i64 + reach) as usize] += 1;
            }
            let bins = counts
                .into_iter()
                .enumerate()
                .map(|(k, count)| DensityBin {
                    center: (k as i64 - reach) as f64 * bin_width,
                    count,
                    density: count as f64 / (n * bin_width),
                })
                .collect();
            ErrorDensity {
                label: r.label.clone(),
                mean,
                sd,
                central_90_width,
                bin_width,
                bins,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::RecordPrediction;

    fn result(label: &str, pairs: &[(f64, f64)]) -> CvResult {
        let preds = pairs
            .iter()
            .enumerate()
            .map(|(i, &(p, t))| RecordPrediction {
                sample_id: format!("s{i}"),
                run_id: "r".into(),
                fold: "f".into(),
                prediction: p,
                truth: t,
            })
            .collect();
        CvResult::from_predictions(label, preds, vec![]).unwrap()
    }

    #[test]
    fn perfect_predictions_in_zero_bin() {
        let d = &error_density(&[result("m", &[(0.1, 0.1), (0.2, 0.2)])], 0.01)[0];
        assert_eq!(d.bins.len(), 1);
        assert_eq!(d.bins[0].center, 0.0);
        assert_eq!(d.bins[0].count, 2);
        assert_eq!(d.sd, 0.0);
    }

    #[test]
    fn symmetric_pair() {
        let d = &error_density(&[result("m", &[(0.08, 0.10), (0.22, 0.20)])], 0.01)[0];
        assert!(d.mean.abs() < 1e-15);
        assert!((d.sd - 0.02).abs() < 1e-12);
        assert_eq!(d.bins.len(), 5);
        assert_eq!(d.bins.iter().map(|b| b.count).sum::<usize>(), 2);
        let area: f64 = d.bins.iter().map(|b| b.density * d.bin_width).sum();
        assert!((area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_distribution_per_result() {
        let rs: Vec<CvResult> = (0..4).map(|i| result(&format!("m{i}"), &[(0.1, 0.12)])).collect();
        let d = error_density(&rs, 0.01);
        assert_eq!(d.iter().map(|x| x.label.as_str()).collect::<Vec<_>>(), ["m0", "m1", "m2", "m3"]);
    }
}
