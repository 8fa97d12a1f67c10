#![allow(dead_code)]

use std::sync::Arc;

use mcfusion::baselines::GpHyper;
use mcfusion::imaging::SliceImage;
use mcfusion::models::{ModelInput, Regressor};
use mcfusion::pipeline::{prepare_records, PreparedRecord};
use mcfusion::simulator::{generate_dataset, GeneratedDataset, RunShape, SliceTruth};
use mcfusion::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn generate(cfg: &RunConfig) -> GeneratedDataset {
    let sim = &cfg.simulator;
    generate_dataset(&sim.design, &sim.kinetics, &sim.variability, &sim.render, cfg.seed).unwrap()
}

/// Default config, seed 42, preprocessed.
pub fn benchmark() -> (RunConfig, Vec<PreparedRecord>) {
    let cfg = RunConfig::default();
    let ds = generate(&cfg);
    let records = prepare_records(&ds.drying_records(), &cfg.imaging).unwrap();
    (cfg, records)
}

/// Model input in f64 with an already prepared image.
pub fn input_f64(tabular: &[f64], features: &[f64], image: Option<Vec<f64>>) -> ModelInput<f64> {
    ModelInput {
        tabular: tabular.to_vec(),
        features: features.to_vec(),
        image: image.map(Arc::new),
    }
}

/// Worst relative error between backprop and central differences of
/// `(f(x) - target)^2` over every parameter. Relative error is
/// `|a - n| / max(|a|, |n|, floor)`; `floor` keeps exactly-zero gradients
/// (dead ReLUs) from dividing by round-off.
/// Coordinates where steps h and h/2 disagree straddle a ReLU or max-pool
/// kink and are skipped; the skipped fraction is returned so callers can bound it.
pub fn grad_check<M: Regressor<f64>>(model: &mut M, input: &ModelInput<f64>, target: f64, h: f64, floor: f64) -> (f64, String, f64) {
    model.zero_grad();
    let (p, cache) = model.forward_train(input).unwrap();
    model.backward(cache, 2.0 * (p - target));
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.clone()).collect();
    let loss = |m: &M| {
        let p = m.predict(input).unwrap();
        (p - target) * (p - target)
    };
    let numeric = |model: &mut M, pi: usize, j: usize, h: f64| {
        let orig = model.params()[pi].value[j];
        model.params_mut()[pi].value[j] = orig + h;
        let up = loss(model);
        model.params_mut()[pi].value[j] = orig - h;
        let down = loss(model);
        model.params_mut()[pi].value[j] = orig;
        (up - down) / (2.0 * h)
    };
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(floor);
    let mut worst = (0.0, String::new());
    let (mut total, mut skipped) = (0usize, 0usize);
    for (pi, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            total += 1;
            let n = numeric(model, pi, j, h);
            let e = rel(a, n);
            if e > 1e-6 && rel(n, numeric(model, pi, j, h / 2.0)) > 1e-6 {
                skipped += 1;
                continue;
            }
            if e > worst.0 {
                worst = (e, format!("{}[{j}]: analytic {a:e}, numeric {n:e}", model.params()[pi].name));
            }
        }
    }
    (worst.0, worst.1, skipped as f64 / total as f64)
}

/// 50 run images at the two temperature extremes, one- and two-slice runs.
pub fn oracle_corpus(cfg: &RunConfig) -> Vec<(SliceImage, Vec<SliceTruth>)> {
    let mut design = cfg.simulator.design.clone();
    design.temperatures = vec![60.0, 80.0];
    design.velocities = vec![1.5];
    design.mc_targets = vec![0.10];
    design.runs = vec![RunShape { slices: 1, repetitions: 12 }, RunShape { slices: 2, repetitions: 13 }];
    let sim = &cfg.simulator;
    let ds = generate_dataset(&design, &sim.kinetics, &sim.variability, &sim.render, 7).unwrap();
    let mut out: Vec<(SliceImage, Vec<SliceTruth>)> = Vec::new();
    let mut last_run = String::new();
    for g in &ds.records {
        if g.record.sample.run_id != last_run {
            last_run = g.record.sample.run_id.clone();
            let img = match &g.record.image {
                mcfusion::domain::ImageRef::Memory(i) => (**i).clone(),
                _ => unreachable!(),
            };
            out.push((img, Vec::new()));
        }
        out.last_mut().unwrap().1.push(g.truth.clone());
    }
    out
}

/// Dense solve by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, p);
        b.swap(col, p);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// `(X'X) beta = X'y` with an intercept column.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = x.iter().map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect()).collect();
    let d = rows[0].len();
    let xtx = (0..d).map(|i| (0..d).map(|j| rows.iter().map(|r| r[i] * r[j]).sum()).collect()).collect();
    let xty = (0..d).map(|i| rows.iter().zip(y).map(|(r, v)| r[i] * v).sum()).collect();
    solve(xtx, xty)
}

pub fn fixture(seed: u64, n: usize, d: usize, noise: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
    let y = x
        .iter()
        .map(|r| 0.3 + r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + noise * rng.random_range(-1.0..1.0))
        .collect();
    (x, y)
}

pub const FIXTURES: [(u64, usize, usize, f64); 5] = [(1, 10, 1, 0.1), (2, 20, 3, 0.05), (3, 84, 3, 0.2), (4, 84, 5, 0.1), (5, 7, 5, 0.0)];

pub fn gram_oracle(x: &[Vec<f64>], y: &[f64], h: &GpHyper, q: &[f64]) -> f64 {
    let n = x.len();
    let k = (0..n)
        .map(|i| (0..n).map(|j| h.kernel(&x[i], &x[j]) + if i == j { h.noise_variance } else { 0.0 }).collect())
        .collect();
    let alpha = solve(k, y.to_vec());
    x.iter().zip(&alpha).map(|(xi, a)| h.kernel(xi, q) * a).sum()
}
