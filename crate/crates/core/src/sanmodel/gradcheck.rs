//! Central finite-difference verification of the SAN loss gradients.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::models::Autoencoder;
use super::train::{batch_gradients, batch_loss, Objective, TrainSample};
use crate::error::{Error, Result};
use crate::nn::seeded_rng;

pub const MAX_CHECK_PARAMS: usize = 10_000;
pub const MAX_CHECK_BATCH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// max |analytic - fd| / (|analytic| + |fd| + 1e-8) over checked params
    pub max_rel_error: f64,
    pub checked: usize,
    pub max_abs_analytic: f64,
    /// True when every analytic gradient entry (not only the sampled ones) is exactly zero.
    pub all_analytic_zero: bool,
}

/// Compares analytic gradients of the full weighted loss with central
/// differences of step `h` on up to `max_samples` randomly chosen parameters.
pub fn gradient_check(
    ae: &Autoencoder<f64>,
    obj: &Objective<'_, f64>,
    batch: &[TrainSample<'_, f64>],
    max_samples: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if batch.is_empty() || batch.len() > MAX_CHECK_BATCH {
        return Err(Error::Config(format!(
            "gradient check takes 1..={MAX_CHECK_BATCH} images, got {}",
            batch.len()
        )));
    }
    if ae.param_count() > MAX_CHECK_PARAMS {
        return Err(Error::Config(format!(
            "gradient check needs a model with at most {MAX_CHECK_PARAMS} parameters, got {}",
            ae.param_count()
        )));
    }
    let (_, grads) = batch_gradients(ae, obj, batch)?;
    let flat: Vec<(usize, usize)> = grads
        .tensors
        .iter()
        .enumerate()
        .flat_map(|(t, v)| (0..v.len()).map(move |j| (t, j)))
        .collect();
    let chosen: Vec<usize> = if flat.len() <= max_samples {
        (0..flat.len()).collect()
    } else {
        let mut rng = seeded_rng(seed);
        let mut idx = sample(&mut rng, flat.len(), max_samples).into_vec();
        idx.sort_unstable();
        idx
    };

    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for &i in &chosen {
        let (t, j) = flat[i];
        let analytic = grads.tensors[t][j];
        let mut plus = ae.clone();
        plus.tensors_mut()[t][j] += h;
        let mut minus = ae.clone();
        minus.tensors_mut()[t][j] -= h;
        let fd = (batch_loss(&plus, obj, batch)?.total - batch_loss(&minus, obj, batch)?.total) / (2.0 * h);
        let rel = (analytic - fd).abs() / (analytic.abs() + fd.abs() + 1e-8);
        max_rel = max_rel.max(rel);
        max_abs = max_abs.max(analytic.abs());
    }
    let all_analytic_zero = grads.tensors.iter().all(|v| v.iter().all(|&g| g == 0.0));
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        checked: chosen.len(),
        max_abs_analytic: max_abs,
        all_analytic_zero,
    })
}
