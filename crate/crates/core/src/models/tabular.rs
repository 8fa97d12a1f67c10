use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{relu_backward, relu_inplace, Linear, Param, Parameterized};
use crate::scalar::Scalar;

/// Three-layer fully connected encoder: `in -> hidden (ReLU) -> out`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularEncoder<T> {
    pub hidden: Linear<T>,
    pub output: Linear<T>,
}

#[derive(Debug, Clone)]
pub struct TabularCache<T> {
    pub input: Vec<T>,
    pub hidden: Vec<T>,
}

impl<T: Scalar> TabularEncoder<T> {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut enc = Self {
            hidden: Linear::new(in_dim, hidden, std::f64::consts::SQRT_2, rng),
            output: Linear::new(hidden, out_dim, 1.0, rng),
        };
        enc.hidden.rename("hidden");
        enc.output.rename("output");
        enc
    }

    pub fn in_dim(&self) -> usize {
        self.hidden.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.output.out_dim
    }

    pub fn encode(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(x)?.0)
    }

    pub fn forward(&self, x: &[T]) -> Result<(Vec<T>, TabularCache<T>)> {
        if x.len() != self.in_dim() {
            return Err(Error::shape(format!("input of length {}", self.in_dim()), x.len()));
        }
        let mut h = self.hidden.forward(x);
        relu_inplace(&mut h);
        let y = self.output.forward(&h);
        Ok((
            y,
            TabularCache {
                input: x.to_vec(),
                hidden: h,
            },
        ))
    }

    pub fn backward(&mut self, cache: &TabularCache<T>, dy: &[T], want_dx: bool) -> Option<Vec<T>> {
        let mut dh = self.output.backward(&cache.hidden, dy, true).expect("requested");
        relu_backward(&cache.hidden, &mut dh);
        self.hidden.backward(&cache.input, &dh, want_dx)
    }
}

impl<T: Scalar> Parameterized<T> for TabularEncoder<T> {
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
