use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Dense, Layer, Sequential};
use crate::scalar::Scalar;

/// Network sizes shared by the autoencoder, auxiliary classifier and matcher.
///
/// Encoder: one stride-2 3x3 conv per entry of `encoder_channels`, then a
/// stride-1 bottleneck conv. Decoder mirrors it with nearest upsampling,
/// ending in a 1x1 conv to `feature_maps` channels. Fusion is a 1x1 conv over
/// those maps plus the output-side prototype, followed by a sigmoid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub height: usize,
    pub width: usize,
    pub encoder_channels: Vec<usize>,
    pub feature_maps: usize,
    pub classifier_channels: Vec<usize>,
    pub matcher_channels: Vec<usize>,
    pub embedding_dim: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            encoder_channels: vec![8, 16],
            feature_maps: 128,
            classifier_channels: vec![8, 16, 16],
            matcher_channels: vec![8, 16, 16],
            embedding_dim: 128,
        }
    }
}

const ELU_GAIN: f64 = 1.2;

impl ArchConfig {
    /// A small configuration for gradient checks and fast tests.
    pub fn tiny(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            encoder_channels: vec![3, 4],
            feature_maps: 4,
            classifier_channels: vec![3, 3],
            matcher_channels: vec![3, 3],
            embedding_dim: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_div = |levels: usize, what: &str| -> Result<()> {
            let d = 1usize << levels;
            if !self.height.is_multiple_of(d) || !self.width.is_multiple_of(d) || self.height < d || self.width < d {
                return Err(Error::Config(format!(
                    "{what} needs height and width divisible by {d}, got {}x{}",
                    self.height, self.width
                )));
            }
            Ok(())
        };
        if self.encoder_channels.is_empty()
            || self.classifier_channels.is_empty()
            || self.matcher_channels.is_empty()
        {
            return Err(Error::Config("channel lists must be nonempty".into()));
        }
        let any_zero = self
            .encoder_channels
            .iter()
            .chain(&self.classifier_channels)
            .chain(&self.matcher_channels)
            .any(|&c| c == 0);
        if any_zero || self.feature_maps == 0 || self.embedding_dim == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        check_div(self.encoder_channels.len(), "autoencoder")?;
        check_div(self.classifier_channels.len(), "classifier")?;
        check_div(self.matcher_channels.len(), "matcher")
    }

    pub(crate) fn autoencoder_body<T: Scalar>(&self, rng: &mut rand_chacha::ChaCha8Rng) -> Sequential<T> {
        let mut layers = Vec::new();
        let mut prev = 2;
        for &c in &self.encoder_channels {
            layers.push(Layer::Conv(Conv2d::new(prev, c, 3, 2, rng, ELU_GAIN)));
            layers.push(Layer::Elu);
            prev = c;
        }
        layers.push(Layer::Conv(Conv2d::new(prev, prev, 3, 1, rng, ELU_GAIN)));
        layers.push(Layer::Elu);
        for i in (0..self.encoder_channels.len()).rev() {
            let next = self.encoder_channels[i.saturating_sub(1)];
            layers.push(Layer::Upsample2);
            layers.push(Layer::Conv(Conv2d::new(prev, next, 3, 1, rng, ELU_GAIN)));
            layers.push(Layer::Elu);
            prev = next;
        }
        layers.push(Layer::Conv(Conv2d::new(prev, self.feature_maps, 1, 1, rng, ELU_GAIN)));
        layers.push(Layer::Elu);
        Sequential::new(layers)
    }

    pub(crate) fn fusion<T: Scalar>(&self, rng: &mut rand_chacha::ChaCha8Rng) -> Sequential<T> {
        Sequential::new(vec![
            Layer::Conv(Conv2d::new(self.feature_maps + 1, 1, 1, 1, rng, 1.0)),
            Layer::Sigmoid,
        ])
    }

    fn conv_stack<T: Scalar>(channels: &[usize], rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Layer<T>> {
        let mut layers = Vec::new();
        let mut prev = 1;
        for &c in channels {
            layers.push(Layer::Conv(Conv2d::new(prev, c, 3, 2, rng, ELU_GAIN)));
            layers.push(Layer::Elu);
            prev = c;
        }
        layers
    }

    fn flat_features(&self, channels: &[usize]) -> usize {
        let d = 1usize << channels.len();
        channels.last().copied().unwrap_or(1) * (self.height / d) * (self.width / d)
    }

    pub(crate) fn classifier<T: Scalar>(&self, rng: &mut rand_chacha::ChaCha8Rng) -> Sequential<T> {
        let mut layers = Self::conv_stack(&self.classifier_channels, rng);
        layers.push(Layer::Dense(Dense::new(
            self.flat_features(&self.classifier_channels),
            1,
            rng,
            1.0,
        )));
        layers.push(Layer::Sigmoid);
        Sequential::new(layers)
    }

    pub(crate) fn matcher<T: Scalar>(&self, rng: &mut rand_chacha::ChaCha8Rng) -> Sequential<T> {
        let mut layers = Self::conv_stack(&self.matcher_channels, rng);
        layers.push(Layer::Dense(Dense::new(
            self.flat_features(&self.matcher_channels),
            self.embedding_dim,
            rng,
            1.0,
        )));
        layers.push(Layer::L2Normalize);
        Sequential::new(layers)
    }
}
