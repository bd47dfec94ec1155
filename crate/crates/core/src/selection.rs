//! Choosing one of the `t` perturbed outputs per image.
//!
//! Scores are P(male). Best selection picks the output that pushes the score
//! furthest from the true gender and needs ground truth, so it is an
//! evaluation diagnostic. Random selection is the deployable policy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::labels::Gender;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Best,
    Random,
}

/// Index and score of the most confounding output: the lowest score for a
/// male face, the highest for a female face. Ties go to the lowest index.
pub fn select_best(scores: &[f64], gender: Gender) -> Result<(usize, f64)> {
    let Some(&first) = scores.first() else {
        return Err(Error::Config("no scores to select from".into()));
    };
    let mut best = (0, first);
    for (i, &s) in scores.iter().enumerate().skip(1) {
        let better = match gender {
            Gender::Male => s < best.1,
            Gender::Female => s > best.1,
        };
        if better {
            best = (i, s);
        }
    }
    Ok(best)
}

/// Uniform index in `0..t`, fixed for a given `(seed, image_id)`.
pub fn select_random(t: usize, seed: u64, image_id: &str) -> Result<usize> {
    if t == 0 {
        return Err(Error::Config("cannot select from zero outputs".into()));
    }
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(image_id.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    Ok(ChaCha8Rng::from_seed(key).random_range(0..t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        let s = [0.9, 0.2, 0.6, 0.7, 0.8];
        assert_eq!(select_best(&s, Gender::Male).unwrap(), (1, 0.2));
        assert_eq!(select_best(&s, Gender::Female).unwrap(), (0, 0.9));
        assert_eq!(select_best(&[0.3, 0.3], Gender::Male).unwrap().0, 0);
        assert!(select_best(&[], Gender::Male).is_err());
    }

    #[test]
    fn random_is_stable_and_bounded() {
        assert_eq!(select_random(1, 9, "a.png").unwrap(), 0);
        assert_eq!(select_random(5, 9, "a.png").unwrap(), select_random(5, 9, "a.png").unwrap());
        assert!(select_random(0, 9, "a.png").is_err());
    }
}
