//! Eval-time photometric augmentation: a predictor's score averaged over a
//! fixed number of randomly brightened/contrasted copies.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::predictors::GenderPredictor;
use crate::error::Result;
use crate::image::Image;
use crate::nn::seeded_rng;
use crate::photometric::{adjust, PhotometricRanges};

pub const AUGMENT_VARIANTS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub gain: f64,
    pub bias: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedScore {
    pub mean: f64,
    pub variants: Vec<Variant>,
}

/// Mean of the variant scores, summed in variant order.
pub fn mean_score(scores: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = scores.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Scores `AUGMENT_VARIANTS` adjusted copies of `image`; gains and biases are
/// drawn from `ranges` with an RNG seeded by `seed`.
pub fn augment_eval(
    predictor: &dyn GenderPredictor,
    image: &Image<f32>,
    ranges: &PhotometricRanges,
    seed: u64,
) -> Result<AugmentedScore> {
    let mut rng = seeded_rng(seed);
    let params: Vec<(f64, f64)> = (0..AUGMENT_VARIANTS).map(|_| ranges.sample(&mut rng)).collect();
    let variants = params
        .into_iter()
        .map(|(gain, bias)| {
            let score = predictor.score(&adjust(image, gain, bias))?;
            Ok(Variant { gain, bias, score })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AugmentedScore {
        mean: mean_score(variants.iter().map(|v| v.score)),
        variants,
    })
}

/// Per-image augmentation seed. Depends only on the run seed, the dataset
/// name and the image id, so an original and its perturbed versions see the
/// same gains and biases.
pub fn image_seed(seed: u64, dataset: &str, image_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((dataset.len() as u64).to_le_bytes());
    h.update(dataset.as_bytes());
    h.update(image_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}
