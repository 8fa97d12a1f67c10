use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::Param;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive-moment gradient descent with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter set changed between steps");
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let bc1 = T::one() - T::of(c.beta1.powi(self.step as i32));
        let bc2 = T::one() - T::of(c.beta2.powi(self.step as i32));
        let lr = T::of(c.learning_rate) / bc1;
        let eps = T::of(c.epsilon);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + one_b1 * g;
                v[i] = b2 * v[i] + one_b2 * g * g;
                p.value[i] -= lr * m[i] / ((v[i] / bc2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Param::<f64>::zeros("w", &[2]);
        p.value = vec![1.0, -1.0];
        p.grad = vec![0.3, -5.0];
        let mut opt = Adam::new(AdamConfig { learning_rate: 0.01, ..Default::default() });
        opt.step(&mut [&mut p]);
        assert!((p.value[0] - 0.99).abs() < 1e-6);
        assert!((p.value[1] + 0.99).abs() < 1e-6);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = Param::<f64>::zeros("w", &[1]);
        p.value[0] = 3.0;
        let mut opt = Adam::new(AdamConfig { learning_rate: 0.05, ..Default::default() });
        for _ in 0..2000 {
            p.grad[0] = 2.0 * (p.value[0] - 1.0);
            opt.step(&mut [&mut p]);
        }
        assert!((p.value[0] - 1.0).abs() < 1e-3);
    }
}
