use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{ModelInput, Regressor};
use crate::nn::{logit, Adam, AdamConfig};
use crate::scalar::Scalar;

use super::TrainingConfig;

#[derive(Debug, Clone)]
pub struct TrainedModel<M> {
    /// Parameters after the last epoch whose loss was finite.
    pub model: M,
    /// Mean squared training error per epoch, measured during the epoch.
    pub history: Vec<f64>,
    /// `(epoch, loss)` of the first non-finite epoch, if any.
    pub diverged: Option<(usize, f64)>,
}

impl<M> TrainedModel<M> {
    /// Turns a diverged run into an error.
    pub fn check(self) -> Result<Self> {
        match self.diverged {
            Some((epoch, loss)) => Err(Error::Diverged { epoch, loss }),
            None => Ok(self),
        }
    }
}

/// Mini-batch Adam on mean squared error. The model starts as the constant
/// mean target (zero output weights, bias at its logit); batches are
/// reshuffled every epoch from `seed`.
pub fn train<T: Scalar, M: Regressor<T> + Clone>(
    mut model: M,
    inputs: &[ModelInput<T>],
    targets: &[T],
    cfg: &TrainingConfig,
    seed: u64,
) -> Result<TrainedModel<M>> {
    cfg.validate()?;
    if inputs.len() != targets.len() {
        return Err(Error::shape(format!("{} targets", inputs.len()), targets.len()));
    }
    if inputs.is_empty() {
        return Err(Error::domain("no training records"));
    }
    let n = inputs.len();
    let finite: Vec<f64> = targets.iter().map(|t| t.to_f64_lossy()).filter(|t| t.is_finite()).collect();
    let mean = if finite.is_empty() { 0.5 } else { finite.iter().sum::<f64>() / finite.len() as f64 };
    model.reset_output(logit(T::of(mean.clamp(1e-3, 1.0 - 1e-3))));

    let mut adam = Adam::new(AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut last_good = model.clone();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            model.zero_grad();
            let scale = T::of(2.0 / batch.len() as f64);
            for &i in batch {
                let (p, cache) = model.forward_train(&inputs[i])?;
                let e = p - targets[i];
                sse += (e * e).to_f64_lossy();
                model.backward(cache, scale * e);
            }
            adam.step(&mut model.params_mut());
        }
        let loss = sse / n as f64;
        let finite = loss.is_finite() && model.params().iter().all(|p| p.value.iter().all(|v| v.is_finite()));
        if !finite {
            return Ok(TrainedModel {
                model: last_good,
                history,
                diverged: Some((epoch, loss)),
            });
        }
        history.push(loss);
        last_good.clone_from(&model);
    }
    Ok(TrainedModel {
        model,
        history,
        diverged: None,
    })
}

pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::shape(format!("{} truths", predictions.len()), truths.len()));
    }
    if predictions.is_empty() {
        return Err(Error::domain("RMSE of an empty set"));
    }
    let sse: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / predictions.len() as f64).sqrt())
}
