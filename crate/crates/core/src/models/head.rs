use std::f64::consts::SQRT_2;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{relu_backward, relu_inplace, sigmoid, Linear, Param, Parameterized};
use crate::scalar::Scalar;

use super::RatioAllocation;

/// Projects each embedding to its allocated share of the fused vector,
/// concatenates, applies ReLU and maps to a sigmoid-bounded scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionHead<T> {
    pub allocation: RatioAllocation,
    pub tabular_projection: Linear<T>,
    pub image_projection: Linear<T>,
    pub hidden: Option<Linear<T>>,
    pub output: Linear<T>,
}

#[derive(Debug, Clone)]
pub struct HeadCache<T> {
    tabular: Vec<T>,
    image: Vec<T>,
    fused: Vec<T>,
    hidden: Option<Vec<T>>,
    prediction: T,
}

impl<T: Scalar> FusionHead<T> {
    pub fn new<R: Rng + ?Sized>(
        tabular_in: usize,
        image_in: usize,
        allocation: RatioAllocation,
        head_hidden: usize,
        rng: &mut R,
    ) -> Self {
        let mut tabular_projection = Linear::new(tabular_in, allocation.tabular_dims, SQRT_2, rng);
        tabular_projection.rename("tabular_projection");
        let mut image_projection = Linear::new(image_in, allocation.image_dims, SQRT_2, rng);
        image_projection.rename("image_projection");
        let fused = allocation.fused_dim();
        let hidden = (head_hidden > 0).then(|| {
            let mut l = Linear::new(fused, head_hidden, SQRT_2, rng);
            l.rename("hidden");
            l
        });
        let mut output = Linear::new(if head_hidden > 0 { head_hidden } else { fused }, 1, 1.0, rng);
        output.rename("output");
        Self {
            allocation,
            tabular_projection,
            image_projection,
            hidden,
            output,
        }
    }

    /// The concatenated, rectified fused vector.
    pub fn fuse(&self, tabular: &[T], image: &[T]) -> Result<Vec<T>> {
        if tabular.len() != self.tabular_projection.in_dim || image.len() != self.image_projection.in_dim {
            return Err(Error::shape(
                format!("embeddings of {} and {}", self.tabular_projection.in_dim, self.image_projection.in_dim),
                format!("{} and {}", tabular.len(), image.len()),
            ));
        }
        let mut fused = self.tabular_projection.forward(tabular);
        fused.extend(self.image_projection.forward(image));
        relu_inplace(&mut fused);
        Ok(fused)
    }

    pub fn forward(&self, tabular: &[T], image: &[T]) -> Result<(T, HeadCache<T>)> {
        let fused = self.fuse(tabular, image)?;
        let hidden = self.hidden.as_ref().map(|l| {
            let mut h = l.forward(&fused);
            relu_inplace(&mut h);
            h
        });
        let z = self.output.forward(hidden.as_ref().unwrap_or(&fused))[0];
        let prediction = sigmoid(z);
        Ok((
            prediction,
            HeadCache {
                tabular: tabular.to_vec(),
                image: image.to_vec(),
                fused,
                hidden,
                prediction,
            },
        ))
    }

    /// Returns the gradients with respect to the two embeddings.
    pub fn backward(&mut self, cache: &HeadCache<T>, dpred: T) -> (Vec<T>, Vec<T>) {
        let p = cache.prediction;
        let dz = [dpred * p * (T::one() - p)];
        let mut dfused = match (&mut self.hidden, &cache.hidden) {
            (Some(l), Some(h)) => {
                let mut dh = self.output.backward(h, &dz, true).expect("requested");
                relu_backward(h, &mut dh);
                l.backward(&cache.fused, &dh, true).expect("requested")
            }
            _ => self.output.backward(&cache.fused, &dz, true).expect("requested"),
        };
        relu_backward(&cache.fused, &mut dfused);
        let split = self.allocation.tabular_dims;
        let dt = self
            .tabular_projection
            .backward(&cache.tabular, &dfused[..split], true)
            .expect("requested");
        let di = self
            .image_projection
            .backward(&cache.image, &dfused[split..], true)
            .expect("requested");
        (dt, di)
    }

    pub fn output_bias_mut(&mut self) -> &mut T {
        &mut self.output.bias.value[0]
    }

    pub fn reset_output(&mut self, bias: T) {
        self.output.zero_();
        self.output.bias.value[0] = bias;
    }
}

impl<T: Scalar> Parameterized<T> for FusionHead<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.tabular_projection.params();
        v.extend(self.image_projection.params());
        if let Some(h) = &self.hidden {
            v.extend(h.params());
        }
        v.extend(self.output.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.tabular_projection.params_mut();
        v.extend(self.image_projection.params_mut());
        if let Some(h) = &mut self.hidden {
            v.extend(h.params_mut());
        }
        v.extend(self.output.params_mut());
        v
    }
}
