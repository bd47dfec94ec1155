use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// Channel-major activation tensor `[channels][height][width]`. Dense layers
/// see it as a flat vector and emit `n x 1 x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), channels * height * width, "feature map size");
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn vector(data: Vec<T>) -> Self {
        let n = data.len();
        Self::from_vec(n, 1, 1, data)
    }

    pub fn from_image(img: &Image<T>) -> Self {
        Self::from_vec(1, img.height(), img.width(), img.pixels().to_vec())
    }

    /// Stacks single-channel images as channels.
    pub fn stack(images: &[&Image<T>]) -> Result<Self> {
        let (h, w) = images[0].dims();
        let mut data = Vec::with_capacity(images.len() * h * w);
        for img in images {
            img.ensure_dims(h, w)?;
            data.extend_from_slice(img.pixels());
        }
        Ok(Self::from_vec(images.len(), h, w, data))
    }

    /// Appends the channels of `other` (same spatial size).
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::Shape {
                expected: format!("{}x{}", self.height, self.width),
                actual: format!("{}x{}", other.height, other.width),
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Self::from_vec(self.channels + other.channels, self.height, self.width, data))
    }

    /// Splits off the first `channels` channels.
    pub fn leading_channels(&self, channels: usize) -> Self {
        let n = channels * self.height * self.width;
        Self::from_vec(channels, self.height, self.width, self.data[..n].to_vec())
    }

    pub fn plane_size(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
