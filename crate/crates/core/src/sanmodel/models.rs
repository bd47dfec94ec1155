use serde::{Deserialize, Serialize};

use super::arch::ArchConfig;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::{seeded_rng, FeatureMap, Sequential, Trace};
use crate::scalar::Scalar;

/// Convolutional autoencoder with prototype fusion on both ends.
///
/// The input image and the input-side prototype enter as two channels. The
/// decoder's `feature_maps` maps are concatenated with the output-side
/// prototype and combined by a 1x1 convolution into one sigmoid channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder<T> {
    pub(crate) arch: ArchConfig,
    pub(crate) body: Sequential<T>,
    pub(crate) fusion: Sequential<T>,
}

/// Decoder feature maps for one (image, input prototype) pair.
pub(crate) struct Encoded<T> {
    pub trace: Trace<T>,
}

impl<T: Scalar> Autoencoder<T> {
    pub fn new(arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = seeded_rng(seed);
        Ok(Self {
            arch: arch.clone(),
            body: arch.autoencoder_body(&mut rng),
            fusion: arch.fusion(&mut rng),
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn param_count(&self) -> usize {
        self.body.param_count() + self.fusion.param_count()
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        let mut t = self.body.tensors();
        t.extend(self.fusion.tensors());
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut t = self.body.tensors_mut();
        t.extend(self.fusion.tensors_mut());
        t
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }

    pub(crate) fn body_tensor_count(&self) -> usize {
        self.body.tensors().len()
    }

    fn check_inputs(&self, images: &[&Image<T>]) -> Result<()> {
        for img in images {
            img.ensure_dims(self.arch.height, self.arch.width)?;
        }
        Ok(())
    }

    pub(crate) fn encode(&self, x: &Image<T>, proto_in: &Image<T>) -> Result<Encoded<T>> {
        self.check_inputs(&[x, proto_in])?;
        let input = FeatureMap::stack(&[x, proto_in])?;
        Ok(Encoded {
            trace: self.body.forward_trace(&input),
        })
    }

    pub(crate) fn fuse_trace(&self, enc: &Encoded<T>, proto_out: &Image<T>) -> Result<Trace<T>> {
        proto_out.ensure_dims(self.arch.height, self.arch.width)?;
        let joined = enc.trace.output().concat(&FeatureMap::from_image(proto_out))?;
        Ok(self.fusion.forward_trace(&joined))
    }

    /// Produces the perturbed image. Output pixels lie in `[0,1]`.
    pub fn perturb(&self, x: &Image<T>, proto_in: &Image<T>, proto_out: &Image<T>) -> Result<Image<T>> {
        self.check_inputs(&[x, proto_in, proto_out])?;
        let input = FeatureMap::stack(&[x, proto_in])?;
        let feats = self.body.forward(&input);
        let out = self.fusion.forward(&feats.concat(&FeatureMap::from_image(proto_out))?);
        Image::from_clamped(self.arch.height, self.arch.width, out.data)
    }

    pub fn check_finite(&self) -> Result<()> {
        self.body.check_finite("autoencoder.body")?;
        self.fusion.check_finite("autoencoder.fusion")
    }
}

/// Binary gender scorer; output is P(male).
#[derive(Debug, Clone, PartialEq)]
pub struct GenderClassifier<T> {
    pub(crate) arch: ArchConfig,
    pub(crate) net: Sequential<T>,
}

impl<T: Scalar> GenderClassifier<T> {
    pub fn new(arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = seeded_rng(seed);
        Ok(Self {
            arch: arch.clone(),
            net: arch.classifier(&mut rng),
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn score(&self, img: &Image<T>) -> Result<T> {
        img.ensure_dims(self.arch.height, self.arch.width)?;
        Ok(self.score_map(&FeatureMap::from_image(img)))
    }

    pub(crate) fn score_map(&self, x: &FeatureMap<T>) -> T {
        self.net.forward(x).data[0]
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        self.net.tensors()
    }

    pub(crate) fn net(&self) -> &Sequential<T> {
        &self.net
    }

}

/// Unit-length face embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceEmbedding<T>(pub Vec<T>);

impl<T: Scalar> FaceEmbedding<T> {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Cosine similarity in f64; 0 when either vector is zero.
    pub fn cosine(&self, other: &Self) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::Shape {
                expected: format!("embedding dim {}", self.dim()),
                actual: format!("embedding dim {}", other.dim()),
            });
        }
        Ok(cosine_f64(
            self.0.iter().map(|v| v.as_f64()),
            other.0.iter().map(|v| v.as_f64()),
        ))
    }
}

pub(crate) fn cosine_f64(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Fixed embedding network standing in for a face matcher.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceMatcher<T> {
    pub(crate) arch: ArchConfig,
    pub(crate) net: Sequential<T>,
}

impl<T: Scalar> FaceMatcher<T> {
    pub fn new(arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = seeded_rng(seed);
        Ok(Self {
            arch: arch.clone(),
            net: arch.matcher(&mut rng),
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn embed(&self, img: &Image<T>) -> Result<FaceEmbedding<T>> {
        img.ensure_dims(self.arch.height, self.arch.width)?;
        Ok(FaceEmbedding(self.net.forward(&FeatureMap::from_image(img)).data))
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        self.net.tensors()
    }

    /// Little-endian bytes of every parameter, for frozen-ness checks.
    pub fn param_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for t in self.net.tensors() {
            for &v in t {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub(crate) fn net(&self) -> &Sequential<T> {
        &self.net
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(seed: u64, h: usize, w: usize) -> Image<f32> {
        use rand::Rng;
        let mut rng = seeded_rng(seed);
        Image::new(h, w, (0..h * w).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    #[test]
    fn perturb_shape_range_and_determinism() {
        let arch = ArchConfig::tiny(16, 16);
        let ae = Autoencoder::<f32>::new(&arch, 1).unwrap();
        let x = noise(2, 16, 16);
        let (pa, pb) = (noise(3, 16, 16), noise(4, 16, 16));
        let y = ae.perturb(&x, &pa, &pb).unwrap();
        assert_eq!(y.dims(), (16, 16));
        assert!(y.pixels().iter().all(|&p| (0.0..=1.0).contains(&p)));
        assert_eq!(ae.perturb(&x, &pa, &pb).unwrap(), y);
        for extreme in [Image::filled(16, 16, 0.0f32), Image::filled(16, 16, 1.0f32)] {
            let y = ae.perturb(&extreme, &extreme, &extreme).unwrap();
            assert!(y.pixels().iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn perturb_rejects_shape_mismatch() {
        let ae = Autoencoder::<f32>::new(&ArchConfig::tiny(16, 16), 1).unwrap();
        let x = noise(1, 8, 8);
        let p = noise(2, 16, 16);
        assert!(matches!(ae.perturb(&x, &p, &p), Err(Error::Shape { .. })));
    }

    #[test]
    fn classifier_and_matcher_output_contracts() {
        let arch = ArchConfig::tiny(16, 16);
        let g = GenderClassifier::<f32>::new(&arch, 5).unwrap();
        let m = FaceMatcher::<f32>::new(&arch, 6).unwrap();
        let x = noise(7, 16, 16);
        let s = g.score(&x).unwrap();
        assert!((0.0..=1.0).contains(&s));
        let e = m.embed(&x).unwrap();
        assert_eq!(e.dim(), arch.embedding_dim);
        assert!((e.cosine(&e).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn default_arch_has_128_feature_maps() {
        let ae = Autoencoder::<f32>::new(&ArchConfig::default(), 0).unwrap();
        match &ae.fusion.layers[0] {
            crate::nn::Layer::Conv(c) => assert_eq!(c.in_channels, 129),
            other => panic!("unexpected fusion layer {other:?}"),
        }
    }
}
