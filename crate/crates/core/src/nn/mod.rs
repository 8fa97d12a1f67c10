//! Minimal reverse-mode layers for the encoders and heads.
//!
//! Every layer exposes an explicit `forward` that returns what its `backward`
//! needs; gradients accumulate into [`Param::grad`]. Samples are processed one
//! at a time, so summation order (and therefore every result) is fixed.

mod adam;
mod conv;
mod linear;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::scalar::Scalar;

pub use adam::{Adam, AdamConfig};
pub use conv::{avg_pool, Conv2d, ConvCache, MaxPool2d, PoolCache};
pub use linear::Linear;

/// A named trainable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            value: vec![T::zero(); n],
            grad: vec![T::zero(); n],
        }
    }

    /// Normal initialization with standard deviation `gain / sqrt(fan_in)`.
    pub fn normal<R: Rng + ?Sized>(name: impl Into<String>, shape: &[usize], fan_in: usize, gain: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(name, shape);
        let sd = gain / (fan_in.max(1) as f64).sqrt();
        let dist = Normal::new(0.0, sd).expect("finite standard deviation");
        for v in p.value.iter_mut() {
            *v = T::of(dist.sample(rng));
        }
        p
    }

    /// Uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`. Keeps zero inputs off
    /// the ReLU kink.
    pub fn uniform_bias<R: Rng + ?Sized>(name: impl Into<String>, len: usize, fan_in: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(name, &[len]);
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        for v in p.value.iter_mut() {
            *v = T::of(rng.random_range(-bound..=bound));
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// Access to a model's parameters in a fixed, documented order.
pub trait Parameterized<T: Scalar> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Prefixes every parameter name, used when composing modules.
    fn rename(&mut self, prefix: &str) {
        for p in self.params_mut() {
            p.name = format!("{prefix}.{}", p.name);
        }
    }
}

pub fn relu_inplace<T: Scalar>(x: &mut [T]) {
    for v in x.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Masks `grad` where the ReLU output `y` was clipped.
pub fn relu_backward<T: Scalar>(y: &[T], grad: &mut [T]) {
    for (g, &v) in grad.iter_mut().zip(y) {
        if v <= T::zero() {
            *g = T::zero();
        }
    }
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

pub fn logit<T: Scalar>(p: T) -> T {
    (p / (T::one() - p)).ln()
}
