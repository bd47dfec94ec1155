//! Random illumination/contrast adjustment: `clamp(g*(x - 0.5) + 0.5 + b, 0, 1)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotometricRanges {
    /// Contrast gain range, inclusive.
    pub gain: (f64, f64),
    /// Brightness offset range, inclusive.
    pub bias: (f64, f64),
}

impl Default for PhotometricRanges {
    fn default() -> Self {
        Self {
            gain: (0.7, 1.3),
            bias: (-0.15, 0.15),
        }
    }
}

impl PhotometricRanges {
    pub const IDENTITY: PhotometricRanges = PhotometricRanges {
        gain: (1.0, 1.0),
        bias: (0.0, 0.0),
    };

    pub fn sample<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        (uniform(rng, self.gain), uniform(rng, self.bias))
    }

    pub fn is_valid(&self) -> bool {
        self.gain.0 <= self.gain.1 && self.bias.0 <= self.bias.1 && self.gain.0 >= 0.0
    }
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

pub fn adjust<T: Scalar>(img: &Image<T>, gain: f64, bias: f64) -> Image<T> {
    // (x - 0.5) + 0.5 is not always x in floating point
    if gain == 1.0 && bias == 0.0 {
        return img.clone();
    }
    let (g, b, half) = (T::of(gain), T::of(bias), T::of(0.5));
    let values = img.pixels().iter().map(|&x| g * (x - half) + half + b).collect();
    Image::from_clamped(img.height(), img.width(), values).expect("same dimensions")
}
