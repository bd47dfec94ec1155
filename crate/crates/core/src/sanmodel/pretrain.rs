//! Supervised training of the auxiliary gender classifier and face matcher.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::cross_entropy;
use super::models::{FaceMatcher, GenderClassifier};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::labels::Gender;
use crate::nn::{permutation, seeded_rng, Dense, FeatureMap, Grads, Layer, OptimizerConfig, Sequential};
use crate::photometric::{adjust, PhotometricRanges};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Random photometric jitter applied to each training image.
    #[serde(default)]
    pub augment: Option<PhotometricRanges>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            optimizer: OptimizerConfig::adam(2e-3),
            augment: None,
        }
    }
}

/// Mean BCE and its gradient over a batch of `(image, label)` pairs.
pub(crate) fn classifier_batch_grads<T: Scalar>(
    classifier: &GenderClassifier<T>,
    batch: &[(&Image<T>, Gender)],
) -> (f64, Grads<T>) {
    let net = classifier.net();
    let k = T::of(1.0 / batch.len() as f64);
    let sizes = net.tensor_sizes();
    let per_sample: Vec<(f64, Grads<T>)> = batch
        .par_iter()
        .map(|(img, gender)| {
            let trace = net.forward_trace(&FeatureMap::from_image(img));
            let s = trace.output().data[0];
            let t = T::of(gender.target());
            let mut grads = Grads::zeros_like(&sizes);
            // gradient at the logit: sigmoid output minus target
            let g = FeatureMap::vector(vec![k * (s - t)]);
            net.backward_prefix(&trace, net.layers.len() - 1, g, Some(&mut grads), false);
            (cross_entropy(s, t).as_f64(), grads)
        })
        .collect();
    let mut grads = Grads::zeros_like(&sizes);
    let mut loss = 0.0;
    for (l, g) in &per_sample {
        loss += l;
        grads.add_assign(g);
    }
    (loss / batch.len() as f64, grads)
}

fn jitter<T: Scalar>(img: &Image<T>, ranges: Option<&PhotometricRanges>, rng: &mut rand_chacha::ChaCha8Rng) -> Image<T> {
    match ranges {
        Some(r) => {
            let (g, b) = r.sample(rng);
            adjust(img, g, b)
        }
        None => img.clone(),
    }
}

impl<T: Scalar> GenderClassifier<T> {
    /// Minimizes BCE on `data`; returns the mean loss per epoch.
    pub fn fit(&mut self, data: &[(&Image<T>, Gender)], cfg: &FitConfig, seed: u64) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(Error::Config("classifier training set is empty".into()));
        }
        let mut rng = seeded_rng(seed);
        let mut opt = cfg.optimizer.build::<T>(&self.net.tensor_sizes());
        let mut history = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            let order = permutation(&mut rng, data.len());
            let (mut total, mut steps) = (0.0, 0usize);
            for chunk in order.chunks(cfg.batch_size.max(1)) {
                let imgs: Vec<Image<T>> = chunk
                    .iter()
                    .map(|&i| jitter(data[i].0, cfg.augment.as_ref(), &mut rng))
                    .collect();
                let batch: Vec<(&Image<T>, Gender)> =
                    chunk.iter().zip(&imgs).map(|(&i, img)| (img, data[i].1)).collect();
                let (loss, grads) = classifier_batch_grads(self, &batch);
                opt.step(self.net.tensors_mut(), &grads);
                total += loss;
                steps += 1;
            }
            self.net.check_finite("classifier")?;
            history.push(total / steps as f64);
        }
        Ok(history)
    }
}

/// Logit scale of the cosine-style identity head.
const IDENTITY_LOGIT_SCALE: f64 = 16.0;

impl<T: Scalar> FaceMatcher<T> {
    /// Trains the embedding as the penultimate layer of a softmax classifier
    /// over subject indices `0..n_subjects`; the classifier head is discarded.
    /// Returns the mean cross-entropy per epoch.
    pub fn fit_identity(
        &mut self,
        data: &[(&Image<T>, usize)],
        n_subjects: usize,
        cfg: &FitConfig,
        seed: u64,
    ) -> Result<Vec<f64>> {
        if data.is_empty() || n_subjects < 2 {
            return Err(Error::Config("identity training needs at least two subjects".into()));
        }
        if let Some(&(_, bad)) = data.iter().find(|(_, s)| *s >= n_subjects) {
            return Err(Error::Config(format!("subject index {bad} out of range")));
        }
        let mut rng = seeded_rng(seed);
        let mut head: Sequential<T> = Sequential::new(vec![Layer::Dense(Dense::new(
            self.arch.embedding_dim,
            n_subjects,
            &mut rng,
            1.0,
        ))]);
        let net_sizes = self.net.tensor_sizes();
        let head_sizes = head.tensor_sizes();
        let mut all_sizes = net_sizes.clone();
        all_sizes.extend(&head_sizes);
        let mut opt = cfg.optimizer.build::<T>(&all_sizes);
        let scale = T::of(IDENTITY_LOGIT_SCALE);
        let mut history = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            let order = permutation(&mut rng, data.len());
            let (mut total, mut steps) = (0.0, 0usize);
            for chunk in order.chunks(cfg.batch_size.max(1)) {
                let imgs: Vec<Image<T>> = chunk
                    .iter()
                    .map(|&i| jitter(data[i].0, cfg.augment.as_ref(), &mut rng))
                    .collect();
                let k = T::of(1.0 / chunk.len() as f64);
                let net = &self.net;
                let head_ref = &head;
                let per_sample: Vec<(f64, Grads<T>, Grads<T>)> = chunk
                    .par_iter()
                    .zip(imgs.par_iter())
                    .map(|(&i, img)| {
                        let label = data[i].1;
                        let trace = net.forward_trace(&FeatureMap::from_image(img));
                        let h_trace = head_ref.forward_trace(trace.output());
                        let logits: Vec<T> = h_trace.output().data.iter().map(|&z| z * scale).collect();
                        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
                        let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
                        let sum: T = exps.iter().copied().sum();
                        let loss = -((exps[label] / sum).ln());
                        let g: Vec<T> = exps
                            .iter()
                            .enumerate()
                            .map(|(j, &e)| {
                                let p = e / sum;
                                let y = if j == label { T::one() } else { T::zero() };
                                k * scale * (p - y)
                            })
                            .collect();
                        let mut gh = Grads::zeros_like(&head_sizes);
                        let ge = head_ref
                            .backward(&h_trace, FeatureMap::vector(g), Some(&mut gh), true)
                            .expect("input grad requested");
                        let mut gn = Grads::zeros_like(&net_sizes);
                        net.backward(&trace, ge, Some(&mut gn), false);
                        (loss.as_f64(), gn, gh)
                    })
                    .collect();
                let mut grads = Grads::zeros_like(&all_sizes);
                let mut loss = 0.0;
                for (l, gn, gh) in per_sample {
                    loss += l;
                    let mut joined = gn;
                    joined.tensors.extend(gh.tensors);
                    grads.add_assign(&joined);
                }
                let mut params = self.net.tensors_mut();
                params.extend(head.tensors_mut());
                opt.step(params, &grads);
                total += loss / chunk.len() as f64;
                steps += 1;
            }
            self.net.check_finite("matcher")?;
            history.push(total / steps as f64);
        }
        Ok(history)
    }
}
