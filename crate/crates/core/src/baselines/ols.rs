use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear model with intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Numerical rank of the design including the intercept column.
    pub rank: usize,
}

impl OlsModel {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.coefficients.len() + 1
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

/// Least squares through an SVD of `[1 | X]`. Rank-deficient designs get the
/// minimum-norm solution.
pub fn fit_ols(x: &[Vec<f64>], y: &[f64]) -> Result<OlsModel> {
    let n = x.len();
    let d = x.first().map_or(0, |r| r.len());
    if n != y.len() {
        return Err(Error::shape(format!("{n} targets"), y.len()));
    }
    if n < d + 1 {
        return Err(Error::domain(format!("OLS needs at least {} rows, got {n}", d + 1)));
    }
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::shape(format!("rows of length {d}"), "ragged rows"));
    }
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * (n.max(d + 1) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let beta = svd
        .solve(&DVector::from_column_slice(y), tol)
        .map_err(|e| Error::domain(e.to_string()))?;
    Ok(OlsModel {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        rank,
    })
}
