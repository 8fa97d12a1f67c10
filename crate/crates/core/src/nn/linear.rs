use rand::Rng;

use crate::scalar::{axpy, dot, Scalar};

use super::{Param, Parameterized};

/// Dense layer `y = W x + b`.
///
/// The weight is stored input-major (`[in, out]`) so both the forward pass
/// and the weight gradient are contiguous `axpy` sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, gain: f64, rng: &mut R) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: Param::normal("weight", &[in_dim, out_dim], in_dim, gain, rng),
            bias: Param::uniform_bias("bias", out_dim, in_dim, rng),
        }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.in_dim, "linear input length");
        let mut y = self.bias.value.clone();
        for (k, &xk) in x.iter().enumerate() {
            if xk != T::zero() {
                axpy(&mut y, xk, &self.weight.value[k * self.out_dim..(k + 1) * self.out_dim]);
            }
        }
        y
    }

    /// Accumulates parameter gradients; returns `dL/dx` when asked.
    pub fn backward(&mut self, x: &[T], dy: &[T], want_dx: bool) -> Option<Vec<T>> {
        assert_eq!(dy.len(), self.out_dim, "linear output gradient length");
        axpy(&mut self.bias.grad, T::one(), dy);
        let dx = want_dx.then(|| {
            (0..self.in_dim)
                .map(|k| dot(&self.weight.value[k * self.out_dim..(k + 1) * self.out_dim], dy))
                .collect()
        });
        for (k, &xk) in x.iter().enumerate() {
            if xk != T::zero() {
                axpy(&mut self.weight.grad[k * self.out_dim..(k + 1) * self.out_dim], xk, dy);
            }
        }
        dx
    }

    pub fn zero_(&mut self) {
        self.weight.value.iter_mut().for_each(|v| *v = T::zero());
        self.bias.value.iter_mut().for_each(|v| *v = T::zero());
    }
}

impl<T: Scalar> Parameterized<T> for Linear<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
