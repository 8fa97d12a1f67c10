use std::f64::consts::SQRT_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{relu_backward, relu_inplace, sigmoid, Linear, Param, Parameterized};
use crate::scalar::Scalar;

use super::{ModelInput, Regressor};

/// Which parts of a [`ModelInput`] feed an [`Mlp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSelect {
    Tabular,
    /// Tabular vector followed by the image features.
    TabularAndFeatures,
}

impl InputSelect {
    pub fn gather<T: Scalar>(&self, input: &ModelInput<T>) -> Vec<T> {
        match self {
            InputSelect::Tabular => input.tabular.clone(),
            InputSelect::TabularAndFeatures => {
                let mut v = input.tabular.clone();
                v.extend_from_slice(&input.features);
                v
            }
        }
    }
}

/// `in -> hidden (ReLU) -> 1 (sigmoid)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub select: InputSelect,
    pub hidden: Linear<T>,
    pub output: Linear<T>,
}

pub struct MlpCache<T> {
    input: Vec<T>,
    hidden: Vec<T>,
    prediction: T,
}

impl<T: Scalar> Mlp<T> {
    pub fn new(select: InputSelect, in_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = Linear::new(in_dim, hidden, SQRT_2, &mut rng);
        h.rename("hidden");
        let mut output = Linear::new(hidden, 1, 1.0, &mut rng);
        output.rename("output");
        Self { select, hidden: h, output }
    }

    pub fn in_dim(&self) -> usize {
        self.hidden.in_dim
    }

    pub fn predict_raw(&self, x: &[T]) -> Result<T> {
        Ok(self.forward_raw(x.to_vec())?.0)
    }

    fn forward_raw(&self, x: Vec<T>) -> Result<(T, MlpCache<T>)> {
        if x.len() != self.in_dim() {
            return Err(Error::shape(format!("input of length {}", self.in_dim()), x.len()));
        }
        let mut h = self.hidden.forward(&x);
        relu_inplace(&mut h);
        let prediction = sigmoid(self.output.forward(&h)[0]);
        Ok((
            prediction,
            MlpCache {
                input: x,
                hidden: h,
                prediction,
            },
        ))
    }
}

impl<T: Scalar> Parameterized<T> for Mlp<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.hidden.params();
        v.extend(self.output.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.hidden.params_mut();
        v.extend(self.output.params_mut());
        v
    }
}

impl<T: Scalar> Regressor<T> for Mlp<T> {
    type Cache = MlpCache<T>;

    fn forward_train(&self, input: &ModelInput<T>) -> Result<(T, MlpCache<T>)> {
        self.forward_raw(self.select.gather(input))
    }

    fn backward(&mut self, cache: MlpCache<T>, dpred: T) {
        let p = cache.prediction;
        let dz = [dpred * p * (T::one() - p)];
        let mut dh = self.output.backward(&cache.hidden, &dz, true).expect("requested");
        relu_backward(&cache.hidden, &mut dh);
        self.hidden.backward(&cache.input, &dh, false);
    }

    fn reset_output(&mut self, bias: T) {
        self.output.zero_();
        self.output.bias.value[0] = bias;
    }
}
