//! Minimal CPU neural-network toolkit with explicit backpropagation.
//!
//! Everything operates on a single sample at a time; batching is a fold over
//! per-sample gradients, which keeps reductions in a fixed order.

mod layers;
mod map;
mod optim;
mod sequential;

pub use layers::{Conv2d, Dense, Layer, LayerSpec};
pub use map::FeatureMap;
pub use optim::{Optimizer, OptimizerConfig};
pub use sequential::{Grads, Sequential, Trace};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::scalar::Scalar;

/// Gaussian init with standard deviation `gain / sqrt(fan_in)`.
pub(crate) fn init_weights<T: Scalar>(rng: &mut ChaCha8Rng, n: usize, fan_in: usize, gain: f64) -> Vec<T> {
    let std = gain / (fan_in.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    (0..n).map(|_| T::of(normal.sample(rng))).collect()
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fisher-Yates shuffle of `0..n`.
pub fn permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Mixes `parts` into `seed` with the splitmix64 finalizer, giving
/// independent sub-seeds for per-item streams.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}
