use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::models::{allocate_ratio, FusionConfig, FusionHead, HeadCache, ModelInput, Regressor, TabularEncoder};
use crate::models::TabularCache;
use crate::nn::{Param, Parameterized};
use crate::scalar::Scalar;

/// Tabular vector and simple image features through separate fully
/// connected encoders, joined by the same ratio-allocated head as the full
/// fusion network.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelFusion<T> {
    pub tabular: TabularEncoder<T>,
    pub features: TabularEncoder<T>,
    pub head: FusionHead<T>,
}

pub struct ParallelCache<T> {
    tabular: TabularCache<T>,
    features: TabularCache<T>,
    head: HeadCache<T>,
}

impl<T: Scalar> ParallelFusion<T> {
    pub fn new(feature_dim: usize, config: &FusionConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let alloc = allocate_ratio(config.ratio, config.fused_dim)?;
        let mut tabular = TabularEncoder::new(3, config.tabular_hidden, config.embedding_dim, &mut rng);
        tabular.rename("tabular");
        let mut features = TabularEncoder::new(feature_dim, config.tabular_hidden, config.embedding_dim, &mut rng);
        features.rename("features");
        let mut head = FusionHead::new(config.embedding_dim, config.embedding_dim, alloc, config.head_hidden, &mut rng);
        head.rename("head");
        Ok(Self { tabular, features, head })
    }
}

impl<T: Scalar> Parameterized<T> for ParallelFusion<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.tabular.params();
        v.extend(self.features.params());
        v.extend(self.head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.tabular.params_mut();
        v.extend(self.features.params_mut());
        v.extend(self.head.params_mut());
        v
    }
}

impl<T: Scalar> Regressor<T> for ParallelFusion<T> {
    type Cache = ParallelCache<T>;

    fn forward_train(&self, input: &ModelInput<T>) -> Result<(T, ParallelCache<T>)> {
        let (te, tabular) = self.tabular.forward(&input.tabular)?;
        let (fe, features) = self.features.forward(&input.features)?;
        let (pred, head) = self.head.forward(&te, &fe)?;
        Ok((pred, ParallelCache { tabular, features, head }))
    }

    fn backward(&mut self, cache: ParallelCache<T>, dpred: T) {
        let (dt, df) = self.head.backward(&cache.head, dpred);
        self.tabular.backward(&cache.tabular, &dt, false);
        self.features.backward(&cache.features, &df, false);
    }

    fn reset_output(&mut self, bias: T) {
        self.head.reset_output(bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(ratio: (u32, u32)) -> FusionConfig {
        FusionConfig {
            tabular_hidden: 16,
            embedding_dim: 8,
            fused_dim: 12,
            ratio,
            ..FusionConfig::default()
        }
    }

    fn input(features: [f64; 2]) -> ModelInput<f64> {
        ModelInput { tabular: vec![0.3, -1.0, 0.5], features: features.to_vec(), image: None }
    }

    #[test]
    fn equal_ratio_splits_evenly() {
        let m = ParallelFusion::<f64>::new(2, &small((1, 1))).unwrap();
        assert_eq!(m.head.allocation.tabular_dims, 6);
        assert_eq!(m.head.allocation.image_dims, 6);
        assert_eq!(m.tabular.in_dim(), 3);
        assert_eq!(m.features.in_dim(), 2);
    }

    #[test]
    fn zeroed_feature_branch_ignores_features() {
        let mut m = ParallelFusion::<f64>::new(2, &small((8, 1))).unwrap();
        m.head.image_projection.zero_();
        let a = m.predict(&input([0.0, 0.0])).unwrap();
        let b = m.predict(&input([5.0, -3.0])).unwrap();
        assert_eq!(a, b);
        let mut live = ParallelFusion::<f64>::new(2, &small((8, 1))).unwrap();
        *live.head.output_bias_mut() = 0.0;
        assert_ne!(live.predict(&input([0.0, 0.0])).unwrap(), live.predict(&input([5.0, -3.0])).unwrap());
    }
}
