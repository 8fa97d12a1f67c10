use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpConfig {
    /// Lower bound on the fitted noise variance.
    pub noise_floor: f64,
    /// Largest diagonal jitter tried before giving up on a factorization.
    pub max_jitter: f64,
    /// Objective evaluations allowed for the hyperparameter search.
    pub max_evaluations: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            noise_floor: 1e-6,
            max_jitter: 1e-3,
            max_evaluations: 400,
        }
    }
}

/// Isotropic RBF kernel `s2 exp(-|x - x'|^2 / (2 l^2))` plus white noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub signal_variance: f64,
    pub length_scale: f64,
    pub noise_variance: f64,
}

impl GpHyper {
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_variance * (-0.5 * d2 / (self.length_scale * self.length_scale)).exp()
    }
}

/// Zero-mean GP conditioned on training data.
#[derive(Debug, Clone)]
pub struct Gp {
    pub hyper: GpHyper,
    pub x: Vec<Vec<f64>>,
    pub alpha: DVector<f64>,
    /// Jitter that was needed on top of the noise variance.
    pub jitter: f64,
    chol: Cholesky<f64, Dyn>,
}

fn factor(x: &[Vec<f64>], hyper: &GpHyper, max_jitter: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        hyper.kernel(&x[i], &x[j]) + if i == j { hyper.noise_variance } else { 0.0 }
    });
    let mut jitter = 0.0;
    loop {
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok((c, jitter));
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
        if jitter > max_jitter * (1.0 + 1e-9) {
            return Err(Error::NotPositiveDefinite { jitter: max_jitter });
        }
    }
}

impl Gp {
    pub fn fit(x: &[Vec<f64>], y: &[f64], hyper: GpHyper, max_jitter: f64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::shape(format!("{} targets", x.len()), y.len()));
        }
        if x.len() < 2 {
            return Err(Error::domain("GP needs at least two rows"));
        }
        if !(hyper.signal_variance > 0.0 && hyper.length_scale > 0.0 && hyper.noise_variance >= 0.0) {
            return Err(Error::domain(format!("invalid GP hyperparameters {hyper:?}")));
        }
        let (chol, jitter) = factor(x, &hyper, max_jitter)?;
        let alpha = chol.solve(&DVector::from_column_slice(y));
        Ok(Self {
            hyper,
            x: x.to_vec(),
            alpha,
            jitter,
            chol,
        })
    }

    fn cross(&self, q: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| self.hyper.kernel(xi, q)))
    }

    pub fn predict(&self, q: &[f64]) -> f64 {
        self.cross(q).dot(&self.alpha)
    }

    /// Posterior variance of the latent function.
    pub fn predict_variance(&self, q: &[f64]) -> f64 {
        let k = self.cross(q);
        let v = self.chol.solve(&k);
        (self.hyper.signal_variance - k.dot(&v)).max(0.0)
    }

    pub fn log_marginal_likelihood(&self, y: &[f64]) -> f64 {
        let n = y.len() as f64;
        let fit = DVector::from_column_slice(y).dot(&self.alpha);
        let logdet: f64 = self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * fit - logdet - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

pub fn log_marginal_likelihood(x: &[Vec<f64>], y: &[f64], hyper: GpHyper, max_jitter: f64) -> Result<f64> {
    Ok(Gp::fit(x, y, hyper, max_jitter)?.log_marginal_likelihood(y))
}

/// Downhill simplex minimization with the standard coefficients.
/// Returns the best point and its value.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, start: &[f64], step: f64, max_evaluations: usize) -> (Vec<f64>, f64) {
    let d = start.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |p: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(p);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((start.to_vec(), eval(start)));
    for i in 0..d {
        let mut p = start.to_vec();
        p[i] += step;
        let v = eval(&p);
        simplex.push((p, v));
    }
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };
    while evals.get() < max_evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[d].1);
        if (worst - best).abs() <= 1e-10 * (1.0 + best.abs()) {
            break;
        }
        let mut centroid = vec![0.0; d];
        for (p, _) in &simplex[..d] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / d as f64;
            }
        }
        let xr = lerp(&centroid, &simplex[d].0, -1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = lerp(&centroid, &simplex[d].0, -2.0);
            let fe = eval(&xe);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[d].1 {
                let xc = lerp(&centroid, &xr, 0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = lerp(&centroid, &simplex[d].0, 0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < fr.min(simplex[d].1) {
                simplex[d] = (xc, fc);
            } else {
                let x0 = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    s.0 = lerp(&x0, &s.0, 0.5);
                    s.1 = eval(&s.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

/// GP fitted on standardized targets with hyperparameters chosen by
/// maximizing the log marginal likelihood.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub gp: Gp,
    pub y_mean: f64,
    pub y_sd: f64,
    pub log_marginal_likelihood: f64,
}

impl GpModel {
    pub fn predict(&self, q: &[f64]) -> f64 {
        self.y_mean + self.y_sd * self.gp.predict(q)
    }
}

fn median_distance(x: &[Vec<f64>]) -> f64 {
    let mut d = Vec::new();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let v: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            if v > 0.0 {
                d.push(v.sqrt());
            }
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

/// `x` is expected to be standardized already.
pub fn fit_gp(x: &[Vec<f64>], y: &[f64], cfg: &GpConfig) -> Result<GpModel> {
    if x.len() < 2 || x.len() != y.len() {
        return Err(Error::domain("GP needs at least two rows and one target per row"));
    }
    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let mut y_sd = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(y_sd > 1e-12) {
        y_sd = 1.0;
    }
    let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_sd).collect();
    let hyper_of = |p: &[f64]| GpHyper {
        signal_variance: p[0].exp(),
        length_scale: p[1].exp(),
        noise_variance: cfg.noise_floor + p[2].exp(),
    };
    let objective = |p: &[f64]| {
        if p.iter().any(|v| v.abs() > 20.0) {
            return f64::INFINITY;
        }
        log_marginal_likelihood(x, &ys, hyper_of(p), cfg.max_jitter).map_or(f64::INFINITY, |l| -l)
    };
    let start = [0.0, median_distance(x).ln(), (0.1f64).ln()];
    let (best, value) = nelder_mead(objective, &start, 0.5, cfg.max_evaluations);
    if !value.is_finite() {
        return Err(Error::NotPositiveDefinite { jitter: cfg.max_jitter });
    }
    let gp = Gp::fit(x, &ys, hyper_of(&best), cfg.max_jitter)?;
    Ok(GpModel {
        gp,
        y_mean,
        y_sd,
        log_marginal_likelihood: -value,
    })
}
