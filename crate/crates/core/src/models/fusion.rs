use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::imaging::SliceImage;
use crate::nn::{sigmoid, Linear, Param, Parameterized};
use crate::scalar::Scalar;

use super::encoder::EncoderCache;
use super::head::HeadCache;
use super::tabular::TabularCache;
use super::{allocate_ratio, missing_image, EmbeddingPair, FusionConfig, FusionHead, ImageEncoder, ModelInput, Regressor, TabularEncoder};

/// Tabular encoder and image encoder joined by a ratio-allocated head.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionNet<T> {
    pub config: FusionConfig,
    pub tabular: TabularEncoder<T>,
    pub image: ImageEncoder<T>,
    pub head: FusionHead<T>,
}

pub struct FusionCache<T> {
    tabular: TabularCache<T>,
    image: EncoderCache<T>,
    head: HeadCache<T>,
}

impl<T: Scalar> FusionNet<T> {
    pub fn new(config: &FusionConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let alloc = allocate_ratio(config.ratio, config.fused_dim)?;
        let mut tabular = TabularEncoder::new(3, config.tabular_hidden, config.embedding_dim, &mut rng);
        tabular.rename("tabular");
        let mut image = ImageEncoder::new(config.encoder_preset, config.embedding_dim, &mut rng);
        image.rename("image");
        let mut head = FusionHead::new(config.embedding_dim, config.embedding_dim, alloc, config.head_hidden, &mut rng);
        head.rename("head");
        Ok(Self {
            config: config.clone(),
            tabular,
            image,
            head,
        })
    }

    pub fn encode_tabular(&self, x: &[T]) -> Result<Vec<T>> {
        self.tabular.encode(x)
    }

    pub fn encode_image(&self, tensor: &SliceImage) -> Result<Vec<T>> {
        self.image.encode(tensor)
    }

    pub fn fuse_predict(&self, pair: &EmbeddingPair<T>) -> Result<T> {
        pair.check(self.config.embedding_dim)?;
        Ok(self.head.forward(&pair.tabular, &pair.image)?.0)
    }

    /// Prediction from a standardized tabular vector and a tensor-stage image.
    pub fn forward(&self, tabular: &[T], tensor: &SliceImage) -> Result<T> {
        let pair = EmbeddingPair {
            tabular: self.encode_tabular(tabular)?,
            image: self.encode_image(tensor)?,
        };
        self.fuse_predict(&pair)
    }
}

impl<T: Scalar> Parameterized<T> for FusionNet<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.tabular.params();
        v.extend(self.image.params());
        v.extend(self.head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.tabular.params_mut();
        v.extend(self.image.params_mut());
        v.extend(self.head.params_mut());
        v
    }
}

impl<T: Scalar> Regressor<T> for FusionNet<T> {
    type Cache = FusionCache<T>;

    fn forward_train(&self, input: &ModelInput<T>) -> Result<(T, FusionCache<T>)> {
        let image = input.image.as_ref().ok_or_else(missing_image)?;
        let (te, tabular) = self.tabular.forward(&input.tabular)?;
        let (ie, image) = self.image.forward(image)?;
        let (pred, head) = self.head.forward(&te, &ie)?;
        Ok((pred, FusionCache { tabular, image, head }))
    }

    fn backward(&mut self, cache: FusionCache<T>, dpred: T) {
        let (dt, di) = self.head.backward(&cache.head, dpred);
        self.tabular.backward(&cache.tabular, &dt, false);
        self.image.backward(&cache.image, &di);
    }

    fn reset_output(&mut self, bias: T) {
        self.head.reset_output(bias);
    }
}

/// CNN encoder followed by a single linear unit and a sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageOnlyNet<T> {
    pub encoder: ImageEncoder<T>,
    pub output: Linear<T>,
}

pub struct ImageOnlyCache<T> {
    encoder: EncoderCache<T>,
    embedding: Vec<T>,
    prediction: T,
}

impl<T: Scalar> ImageOnlyNet<T> {
    pub fn new(config: &FusionConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut encoder = ImageEncoder::new(config.encoder_preset, config.embedding_dim, &mut rng);
        encoder.rename("image");
        let mut output = Linear::new(config.embedding_dim, 1, 1.0, &mut rng);
        output.rename("output");
        Ok(Self { encoder, output })
    }
}

impl<T: Scalar> Parameterized<T> for ImageOnlyNet<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.encoder.params();
        v.extend(self.output.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.encoder.params_mut();
        v.extend(self.output.params_mut());
        v
    }
}

impl<T: Scalar> Regressor<T> for ImageOnlyNet<T> {
    type Cache = ImageOnlyCache<T>;

    fn forward_train(&self, input: &ModelInput<T>) -> Result<(T, ImageOnlyCache<T>)> {
        let image = input.image.as_ref().ok_or_else(missing_image)?;
        let (embedding, encoder) = self.encoder.forward(image)?;
        let prediction = sigmoid(self.output.forward(&embedding)[0]);
        Ok((
            prediction,
            ImageOnlyCache {
                encoder,
                embedding,
                prediction,
            },
        ))
    }

    fn backward(&mut self, cache: ImageOnlyCache<T>, dpred: T) {
        let p = cache.prediction;
        let dz = [dpred * p * (T::one() - p)];
        let demb = self.output.backward(&cache.embedding, &dz, true).expect("requested");
        self.encoder.backward(&cache.encoder, &demb);
    }

    fn reset_output(&mut self, bias: T) {
        self.output.zero_();
        self.output.bias.value[0] = bias;
    }
}
