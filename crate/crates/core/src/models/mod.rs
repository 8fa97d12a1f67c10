//! Fusion network and its parts: a fully connected tabular encoder, a
//! residual CNN image encoder and a ratio-allocated concatenation head.

mod checkpoint;
mod encoder;
mod fusion;
mod head;
mod mlp;
mod tabular;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Parameterized;
use crate::scalar::Scalar;

pub use checkpoint::{Checkpoint, CheckpointHeader, ModelKind, TensorEntry, CHECKPOINT_VERSION};
pub use encoder::{BasicBlock, BlockCache, EncoderCache, EncoderSpec, ImageEncoder};
pub use fusion::{FusionCache, FusionNet, ImageOnlyCache, ImageOnlyNet};
pub use head::{FusionHead, HeadCache};
pub use mlp::{InputSelect, Mlp, MlpCache};
pub use tabular::{TabularCache, TabularEncoder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderPreset {
    /// 18-layer topology: 7x7 stem, four stages of two basic blocks.
    Resnet18,
    /// Same residual layout with narrow stages, one block each, behind a
    /// fixed 4x average pool.
    Tiny,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    pub tabular_hidden: usize,
    pub embedding_dim: usize,
    pub fused_dim: usize,
    /// Tabular : image share of the fused vector.
    pub ratio: (u32, u32),
    pub encoder_preset: EncoderPreset,
    /// Extra hidden width after concatenation; 0 maps the fused vector
    /// straight to the output.
    #[serde(default)]
    pub head_hidden: usize,
    pub seed: u64,
    /// Reserved for initializing the image encoder from stored weights.
    #[serde(default)]
    pub pretrained_weights: Option<std::path::PathBuf>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            tabular_hidden: 1024,
            embedding_dim: 512,
            fused_dim: 1024,
            ratio: (8, 1),
            encoder_preset: EncoderPreset::Tiny,
            head_hidden: 0,
            seed: 42,
            pretrained_weights: None,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fused_dim < 2 || self.embedding_dim == 0 || self.tabular_hidden == 0 {
            return Err(Error::Config(format!("invalid fusion dimensions in {self:?}")));
        }
        allocate_ratio(self.ratio, self.fused_dim)?;
        if let Some(p) = &self.pretrained_weights {
            return Err(Error::Config(format!("pretrained encoder weights ({}) are not supported yet", p.display())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair<T> {
    pub tabular: Vec<T>,
    pub image: Vec<T>,
}

impl<T: Scalar> EmbeddingPair<T> {
    pub fn check(&self, embedding_dim: usize) -> Result<()> {
        for (name, v) in [("tabular", &self.tabular), ("image", &self.image)] {
            if v.len() != embedding_dim {
                return Err(Error::shape(
                    format!("{name} embedding of length {embedding_dim}"),
                    v.len(),
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::domain(format!("{name} embedding is not finite")));
            }
        }
        Ok(())
    }
}

/// Split of the fused vector between the two branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatioAllocation {
    pub tabular_dims: usize,
    pub image_dims: usize,
}

impl RatioAllocation {
    pub fn fused_dim(&self) -> usize {
        self.tabular_dims + self.image_dims
    }
}

/// `tabular = floor(fused * rt / (rt + ri))`, clamped so each branch keeps at
/// least one dimension.
pub fn allocate_ratio(ratio: (u32, u32), fused_dim: usize) -> Result<RatioAllocation> {
    let (rt, ri) = ratio;
    if rt == 0 || ri == 0 {
        return Err(Error::domain(format!("ratio parts must be positive, got {rt}:{ri}")));
    }
    if fused_dim < 2 {
        return Err(Error::domain(format!("fused dimension {fused_dim} must be at least 2")));
    }
    let raw = (fused_dim as u128 * rt as u128) / (rt as u128 + ri as u128);
    let tabular_dims = (raw as usize).clamp(1, fused_dim - 1);
    Ok(RatioAllocation {
        tabular_dims,
        image_dims: fused_dim - tabular_dims,
    })
}

/// Standardized inputs for one record. Each model reads the parts it uses.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput<T> {
    /// Standardized (temperature, velocity, time).
    pub tabular: Vec<T>,
    /// Standardized simplified image features.
    pub features: Vec<T>,
    /// Encoder-ready image (already passed through [`ImageEncoder::prepare`]).
    pub image: Option<Arc<Vec<T>>>,
}

/// A scalar regressor the training loop can drive.
pub trait Regressor<T: Scalar>: Parameterized<T> {
    type Cache;

    /// Prediction plus whatever `backward` needs.
    fn forward_train(&self, input: &ModelInput<T>) -> Result<(T, Self::Cache)>;

    /// Accumulates `dpred * d(prediction)/d(params)` into the gradients.
    fn backward(&mut self, cache: Self::Cache, dpred: T);

    fn predict(&self, input: &ModelInput<T>) -> Result<T> {
        Ok(self.forward_train(input)?.0)
    }

    /// Zeroes the output-layer weights and sets its pre-sigmoid bias, so the
    /// model starts as the constant `sigmoid(bias)`.
    fn reset_output(&mut self, bias: T);
}

pub(crate) fn missing_image() -> Error {
    Error::MissingFeature("model input has no image tensor".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_examples() {
        assert_eq!(allocate_ratio((1, 1), 1024).unwrap(), RatioAllocation { tabular_dims: 512, image_dims: 512 });
        assert_eq!(allocate_ratio((8, 1), 1024).unwrap(), RatioAllocation { tabular_dims: 910, image_dims: 114 });
        assert_eq!(allocate_ratio((1, 100), 1024).unwrap(), RatioAllocation { tabular_dims: 10, image_dims: 1014 });
        assert_eq!(allocate_ratio((100, 1), 1024).unwrap(), RatioAllocation { tabular_dims: 1013, image_dims: 11 });
        assert!(allocate_ratio((0, 1), 1024).is_err());
        assert!(allocate_ratio((1, 1), 1).is_err());
    }

    #[test]
    fn ratio_clamps_keep_both_branches() {
        assert_eq!(allocate_ratio((1, 100_000), 8).unwrap(), RatioAllocation { tabular_dims: 1, image_dims: 7 });
        assert_eq!(allocate_ratio((100_000, 1), 8).unwrap(), RatioAllocation { tabular_dims: 7, image_dims: 1 });
    }

    proptest::proptest! {
        #[test]
        fn allocation_partitions(rt in 1u32..1000, ri in 1u32..1000, fused in 2usize..4096) {
            let a = allocate_ratio((rt, ri), fused).unwrap();
            proptest::prop_assert_eq!(a.tabular_dims + a.image_dims, fused);
            proptest::prop_assert!(a.tabular_dims >= 1 && a.image_dims >= 1);
        }
    }
}

