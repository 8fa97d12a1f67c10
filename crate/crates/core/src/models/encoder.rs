use std::f64::consts::SQRT_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{SliceImage, Stage, TENSOR_SIDE};
use crate::nn::{avg_pool, relu_backward, relu_inplace, Conv2d, ConvCache, Linear, MaxPool2d, Param, Parameterized, PoolCache};
use crate::scalar::Scalar;

use super::EncoderPreset;

/// Layer layout of a residual image encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    /// Parameter-free average pool applied to the 224x224 input.
    pub pre_pool: usize,
    pub stem_channels: usize,
    pub stem_kernel: usize,
    pub stem_stride: usize,
    pub stem_padding: usize,
    pub pool: (usize, usize, usize),
    pub widths: Vec<usize>,
    pub blocks_per_stage: usize,
}

impl EncoderSpec {
    pub fn preset(preset: EncoderPreset) -> Self {
        match preset {
            EncoderPreset::Resnet18 => Self {
                pre_pool: 1,
                stem_channels: 64,
                stem_kernel: 7,
                stem_stride: 2,
                stem_padding: 3,
                pool: (3, 2, 1),
                widths: vec![64, 128, 256, 512],
                blocks_per_stage: 2,
            },
            EncoderPreset::Tiny => Self {
                pre_pool: 4,
                stem_channels: 4,
                stem_kernel: 3,
                stem_stride: 2,
                stem_padding: 1,
                pool: (2, 2, 0),
                widths: vec![4, 8, 16, 32],
                blocks_per_stage: 1,
            },
        }
    }

    /// Side of the prepared (pre-pooled) input.
    pub fn input_side(&self) -> usize {
        TENSOR_SIDE / self.pre_pool
    }
}

/// Two 3x3 convolutions with an identity (or strided 1x1) shortcut.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicBlock<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub downsample: Option<Conv2d<T>>,
}

#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    c1: ConvCache<T>,
    a1: Vec<T>,
    c2: ConvCache<T>,
    down: Option<ConvCache<T>>,
    out: Vec<T>,
}

impl<T: Scalar> BasicBlock<T> {
    pub fn new<R: Rng + ?Sized>(in_c: usize, out_c: usize, stride: usize, rng: &mut R) -> Self {
        let mut conv1 = Conv2d::new(in_c, out_c, 3, stride, 1, SQRT_2, rng);
        conv1.rename("conv1");
        let mut conv2 = Conv2d::new(out_c, out_c, 3, 1, 1, 1.0, rng);
        conv2.rename("conv2");
        let downsample = (stride != 1 || in_c != out_c).then(|| {
            let mut d = Conv2d::new(in_c, out_c, 1, stride, 0, 1.0, rng);
            d.rename("downsample");
            d
        });
        Self { conv1, conv2, downsample }
    }

    pub fn forward(&self, x: &[T], h: usize, w: usize) -> (Vec<T>, usize, usize, BlockCache<T>) {
        let (mut a1, c1) = self.conv1.forward(x, h, w);
        relu_inplace(&mut a1);
        let (mut out, c2) = self.conv2.forward(&a1, c1.out_h, c1.out_w);
        let down = match &self.downsample {
            Some(d) => {
                let (s, cache) = d.forward(x, h, w);
                for (o, v) in out.iter_mut().zip(s) {
                    *o += v;
                }
                Some(cache)
            }
            None => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o += v;
                }
                None
            }
        };
        relu_inplace(&mut out);
        let (oh, ow) = (c2.out_h, c2.out_w);
        (out.clone(), oh, ow, BlockCache { c1, a1, c2, down, out })
    }

    pub fn backward(&mut self, cache: &BlockCache<T>, dy: &[T], want_dx: bool) -> Option<Vec<T>> {
        let mut g = dy.to_vec();
        relu_backward(&cache.out, &mut g);
        let mut da1 = self.conv2.backward(&cache.c2, &g, true).expect("requested");
        relu_backward(&cache.a1, &mut da1);
        let dx_branch = self.conv1.backward(&cache.c1, &da1, want_dx);
        let dx_short = match (&mut self.downsample, &cache.down) {
            (Some(d), Some(c)) => d.backward(c, &g, want_dx),
            _ => want_dx.then_some(g),
        };
        match (dx_branch, dx_short) {
            (Some(mut a), Some(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                Some(a)
            }
            _ => None,
        }
    }
}

impl<T: Scalar> Parameterized<T> for BasicBlock<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.conv1.params();
        v.extend(self.conv2.params());
        if let Some(d) = &self.downsample {
            v.extend(d.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.conv1.params_mut();
        v.extend(self.conv2.params_mut());
        if let Some(d) = &mut self.downsample {
            v.extend(d.params_mut());
        }
        v
    }
}

/// Residual CNN mapping a 224x224x3 tensor to an embedding vector:
/// stem conv, max pool, residual stages, global average pool, linear projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEncoder<T> {
    pub spec: EncoderSpec,
    pub stem: Conv2d<T>,
    pub pool: MaxPool2d,
    pub blocks: Vec<BasicBlock<T>>,
    pub projection: Linear<T>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    stem: ConvCache<T>,
    stem_out: Vec<T>,
    pool: PoolCache,
    blocks: Vec<BlockCache<T>>,
    gap_shape: (usize, usize, usize),
    gap: Vec<T>,
}

impl<T: Scalar> ImageEncoder<T> {
    pub fn new<R: Rng + ?Sized>(preset: EncoderPreset, embedding_dim: usize, rng: &mut R) -> Self {
        let spec = EncoderSpec::preset(preset);
        let mut stem = Conv2d::new(3, spec.stem_channels, spec.stem_kernel, spec.stem_stride, spec.stem_padding, SQRT_2, rng);
        stem.rename("stem");
        let mut blocks = Vec::new();
        let mut in_c = spec.stem_channels;
        for (s, &width) in spec.widths.iter().enumerate() {
            for b in 0..spec.blocks_per_stage {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                let mut block = BasicBlock::new(in_c, width, stride, rng);
                block.rename(&format!("stage{s}.block{b}"));
                blocks.push(block);
                in_c = width;
            }
        }
        let mut projection = Linear::new(in_c, embedding_dim, 1.0, rng);
        projection.rename("projection");
        let (k, s, p) = spec.pool;
        Self {
            pool: MaxPool2d { kernel: k, stride: s, padding: p },
            spec,
            stem,
            blocks,
            projection,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.projection.out_dim
    }

    /// Channel-major 224x224x3 tensor to the encoder's input resolution.
    pub fn prepare(&self, chw: &[T]) -> Result<Vec<T>> {
        if chw.len() != 3 * TENSOR_SIDE * TENSOR_SIDE {
            return Err(Error::shape("224x224x3 tensor", chw.len()));
        }
        Ok(avg_pool(chw, 3, TENSOR_SIDE, TENSOR_SIDE, self.spec.pre_pool))
    }

    /// Prepares a tensor-stage image.
    pub fn prepare_image(&self, image: &SliceImage) -> Result<Vec<T>> {
        if image.stage != Stage::Tensor {
            return Err(Error::InvalidImage(format!("encoder expects a tensor image, got {:?}", image.stage)));
        }
        image.check()?;
        self.prepare(&image.to_chw::<T>()?)
    }

    pub fn forward(&self, prepared: &[T]) -> Result<(Vec<T>, EncoderCache<T>)> {
        let side = self.spec.input_side();
        if prepared.len() != 3 * side * side {
            return Err(Error::shape(format!("prepared input of {}x{side}x{side}", 3), prepared.len()));
        }
        let (mut stem_out, stem) = self.stem.forward(prepared, side, side);
        relu_inplace(&mut stem_out);
        let (mut x, pool) = self.pool.forward(&stem_out, self.stem.out_channels, stem.out_h, stem.out_w);
        let (mut h, mut w) = (pool.out_h, pool.out_w);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, oh, ow, cache) = block.forward(&x, h, w);
            x = y;
            h = oh;
            w = ow;
            blocks.push(cache);
        }
        let c = x.len() / (h * w);
        let inv = T::one() / T::of((h * w) as f64);
        let gap: Vec<T> = x.chunks_exact(h * w).map(|ch| ch.iter().copied().sum::<T>() * inv).collect();
        let emb = self.projection.forward(&gap);
        Ok((
            emb,
            EncoderCache {
                stem,
                stem_out,
                pool,
                blocks,
                gap_shape: (c, h, w),
                gap,
            },
        ))
    }

    pub fn encode(&self, image: &SliceImage) -> Result<Vec<T>> {
        Ok(self.forward(&self.prepare_image(image)?)?.0)
    }

    pub fn backward(&mut self, cache: &EncoderCache<T>, demb: &[T]) {
        let dgap = self.projection.backward(&cache.gap, demb, true).expect("requested");
        let (c, h, w) = cache.gap_shape;
        let inv = T::one() / T::of((h * w) as f64);
        let mut dx = vec![T::zero(); c * h * w];
        for (ch, &g) in dgap.iter().enumerate() {
            dx[ch * h * w..(ch + 1) * h * w].iter_mut().for_each(|v| *v = g * inv);
        }
        for (block, bc) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            dx = block.backward(bc, &dx, true).expect("requested");
        }
        let mut dstem = self.pool.backward(&cache.pool, &dx);
        relu_backward(&cache.stem_out, &mut dstem);
        self.stem.backward(&cache.stem, &dstem, false);
    }
}

impl<T: Scalar> Parameterized<T> for ImageEncoder<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.stem.params();
        for b in &self.blocks {
            v.extend(b.params());
        }
        v.extend(self.projection.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.stem.params_mut();
        for b in &mut self.blocks {
            v.extend(b.params_mut());
        }
        v.extend(self.projection.params_mut());
        v
    }
}
