//! Grayscale face images with intensities in `[0,1]`.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A row-major grayscale pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    pixels: Vec<T>,
}

impl<T: Scalar> Image<T> {
    /// Builds an image, rejecting wrong lengths and pixels outside `[0,1]`.
    pub fn new(height: usize, width: usize, pixels: Vec<T>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::Shape {
                expected: format!("{height}x{width} = {} pixels", height * width),
                actual: format!("{} pixels", pixels.len()),
            });
        }
        if let Some(&bad) = pixels
            .iter()
            .find(|p| !(p.is_finite() && **p >= T::zero() && **p <= T::one()))
        {
            return Err(Error::PixelRange { value: bad.as_f64() });
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    /// Builds an image from arbitrary values, clamping each into `[0,1]`.
    pub fn from_clamped(height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        let pixels = values
            .into_iter()
            .map(|v| if v.is_nan() { T::zero() } else { v.max(T::zero()).min(T::one()) })
            .collect();
        Self::new(height, width, pixels)
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        let value = value.max(T::zero()).min(T::one());
        Self {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.pixels[row * self.width + col]
    }

    pub fn into_pixels(self) -> Vec<T> {
        self.pixels
    }

    pub fn ensure_dims(&self, height: usize, width: usize) -> Result<()> {
        if self.dims() != (height, width) {
            return Err(Error::Shape {
                expected: format!("{height}x{width}"),
                actual: format!("{}x{}", self.height, self.width),
            });
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|p| U::of(p.as_f64())).collect(),
        }
    }

    /// Loads an 8-bit grayscale PNG or PGM, scaling to `[0,1]`.
    pub fn load(path: &Path) -> Result<Self> {
        let dynamic = image::open(path).map_err(|e| match e {
            image::ImageError::IoError(source) => Error::io(path, source),
            other => Error::Image {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })?;
        let gray = dynamic.to_luma8();
        let (w, h) = gray.dimensions();
        let pixels = gray
            .into_raw()
            .into_iter()
            .map(|v| T::of(f64::from(v) / 255.0))
            .collect();
        Self::new(h as usize, w as usize, pixels)
    }

    pub fn to_gray8(&self) -> GrayImage {
        let raw: Vec<u8> = self.pixels.iter().map(|&p| quantize8(p.as_f64())).collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    /// Saves as 8-bit grayscale; the format follows the extension (`.png`, `.pgm`).
    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_gray8().save(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Saves as a 16-bit grayscale PNG.
    pub fn save_png16(&self, path: &Path) -> Result<()> {
        let raw: Vec<u16> = self
            .pixels
            .iter()
            .map(|&p| (p.as_f64().clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect();
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, raw)
                .expect("buffer length matches dimensions");
        buf.save(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

pub(crate) fn quantize8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_and_bad_length() {
        assert!(matches!(
            Image::<f32>::new(1, 2, vec![0.0, 1.5]),
            Err(Error::PixelRange { .. })
        ));
        assert!(matches!(
            Image::<f32>::new(2, 2, vec![0.0; 3]),
            Err(Error::Shape { .. })
        ));
        let img = Image::<f64>::from_clamped(1, 3, vec![-1.0, 0.5, 2.0]).unwrap();
        assert_eq!(img.pixels(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn png_and_pgm_round_trip_8bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<f32> = (0..12).map(|i| (i * 20) as f32 / 255.0).collect();
        let img = Image::new(3, 4, pixels).unwrap();
        for name in ["a.png", "a.pgm"] {
            let path = dir.path().join(name);
            img.save(&path).unwrap();
            let back = Image::<f32>::load(&path).unwrap();
            assert_eq!(back, img, "{name}");
        }
    }
}
