//! The three SAN cost terms.

use serde::{Deserialize, Serialize};

use super::models::FaceEmbedding;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::labels::Gender;
use crate::scalar::Scalar;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub recon: f64,
    pub matching: f64,
    pub gender: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            recon: 1.0,
            matching: 1.0,
            gender: 1.0,
        }
    }
}

impl LossWeights {
    pub const ZERO: LossWeights = LossWeights {
        recon: 0.0,
        matching: 0.0,
        gender: 0.0,
    };

    pub fn recon_only() -> Self {
        Self {
            recon: 1.0,
            matching: 0.0,
            gender: 0.0,
        }
    }
}

/// Batch-mean loss terms and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub matching: f64,
    pub gender: f64,
    pub weights: LossWeights,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(recon: f64, matching: f64, gender: f64, weights: LossWeights) -> Self {
        Self {
            recon,
            matching,
            gender,
            weights,
            total: weights.recon * recon + weights.matching * matching + weights.gender * gender,
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for (term, value) in [
            ("recon", self.recon),
            ("match", self.matching),
            ("gender", self.gender),
        ] {
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { term, value });
            }
        }
        Ok(())
    }
}

/// Mean squared pixel difference.
pub fn loss_reconstruction<T: Scalar>(x: &Image<T>, y: &Image<T>) -> Result<T> {
    y.ensure_dims(x.height(), x.width())?;
    let n = T::of(x.pixels().len() as f64);
    Ok(x.pixels()
        .iter()
        .zip(y.pixels())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        / n)
}

/// Squared Euclidean distance.
pub fn loss_match<T: Scalar>(a: &FaceEmbedding<T>, b: &FaceEmbedding<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::Shape {
            expected: format!("embedding dim {}", a.dim()),
            actual: format!("embedding dim {}", b.dim()),
        });
    }
    Ok(squared_distance(&a.0, &b.0))
}

pub(crate) fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Binary cross-entropy of a clamped probability against target `t`.
pub fn cross_entropy<T: Scalar>(s: T, t: T) -> T {
    let s = clamp_prob(s);
    -(t * s.ln()) - (T::one() - t) * (T::one() - s).ln()
}

/// Derivative of [`cross_entropy`] in `s`; zero where the clamp is active.
#[cfg(test)]
pub(crate) fn cross_entropy_grad<T: Scalar>(s: T, t: T) -> T {
    let eps = T::of(PROB_EPS);
    if s < eps || s > T::one() - eps {
        return T::zero();
    }
    -(t / s) + (T::one() - t) / (T::one() - s)
}

fn clamp_prob<T: Scalar>(s: T) -> T {
    let eps = T::of(PROB_EPS);
    s.max(eps).min(T::one() - eps)
}

/// Cross-entropy with the true label on the same-prototype output and the
/// reversed label on the opposite-prototype output. Scores are P(male).
pub fn loss_gender<T: Scalar>(s_same: T, s_opp: T, gender: Gender) -> T {
    let g = T::of(gender.target());
    cross_entropy(s_same, g) + cross_entropy(s_opp, T::one() - g)
}
