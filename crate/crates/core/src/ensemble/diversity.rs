//! Auxiliary-classifier error rates and the entropy diversity measure.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledImage;
use crate::error::{Error, Result};
use crate::labels::Gender;
use crate::sanmodel::GenderClassifier;
use crate::scalar::Scalar;

/// Entropy diversity of a `t x N` correctness matrix:
/// `(1/N) * sum_k min(l_k, t - l_k) / (t - ceil(t/2))`, with `l_k` the number
/// of members correct on sample `k`. 0 when members always agree, 1 at
/// maximal disagreement.
pub fn entropy_diversity(correct: &[Vec<bool>]) -> Result<f64> {
    let t = correct.len();
    if t < 2 {
        return Err(Error::Config(format!("diversity needs at least two members, got {t}")));
    }
    let n = correct[0].len();
    if n == 0 || correct.iter().any(|row| row.len() != n) {
        return Err(Error::Config("correctness rows must be nonempty and equally long".into()));
    }
    let denom = (t - t.div_ceil(2)) as f64;
    let sum: f64 = (0..n)
        .map(|k| {
            let l = correct.iter().filter(|row| row[k]).count();
            l.min(t - l) as f64 / denom
        })
        .sum();
    Ok(sum / n as f64)
}

/// Published full-scale figures (error % on two face datasets, and
/// diversity on each), carried in reports for context only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFigures {
    pub datasets: [String; 2],
    pub mean_error_percent: [f64; 2],
    pub diversity: [f64; 2],
}

pub fn reference_figures(scheme: super::Scheme) -> ReferenceFigures {
    use super::Scheme::*;
    let (e, d) = match scheme {
        E1 => ([2.20, 6.33], [0.047, 0.079]),
        E2 => ([2.06, 6.34], [0.044, 0.076]),
        E3 => ([2.08, 5.55], [0.045, 0.083]),
    };
    ReferenceFigures {
        datasets: ["CelebA-test".into(), "MORPH-test".into()],
        mean_error_percent: e,
        diversity: d,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub member_errors: Vec<f64>,
    pub mean_error: f64,
    /// `None` for a single-member ensemble.
    pub entropy: Option<f64>,
    pub samples: usize,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceFigures>,
}

pub const DECISION_THRESHOLD: f64 = 0.5;

/// Report from per-member P(male) scores (`scores[i][k]` for member `i`,
/// sample `k`). A sample counts as predicted male when its score is >= 0.5.
pub fn report_from_scores(scores: &[Vec<f64>], genders: &[Gender]) -> Result<DiversityReport> {
    if scores.is_empty() || genders.is_empty() {
        return Err(Error::Eval("error report needs members and samples".into()));
    }
    let correct: Vec<Vec<bool>> = scores
        .iter()
        .map(|row| {
            if row.len() != genders.len() {
                return Err(Error::Eval("score row length differs from label count".into()));
            }
            Ok(row
                .iter()
                .zip(genders)
                .map(|(&s, &g)| (s >= DECISION_THRESHOLD) == (g == Gender::Male))
                .collect())
        })
        .collect::<Result<_>>()?;
    let n = genders.len() as f64;
    let member_errors: Vec<f64> = correct
        .iter()
        .map(|row| row.iter().filter(|&&c| !c).count() as f64 / n)
        .collect();
    let mean_error = member_errors.iter().sum::<f64>() / member_errors.len() as f64;
    let entropy = if correct.len() >= 2 {
        Some(entropy_diversity(&correct)?)
    } else {
        None
    };
    Ok(DiversityReport {
        member_errors,
        mean_error,
        entropy,
        samples: genders.len(),
        threshold: DECISION_THRESHOLD,
        reference: None,
    })
}

/// Scores `data` with every classifier and builds the report; also returns
/// the score matrix so it can be dumped.
pub fn error_report<T: Scalar>(
    classifiers: &[&GenderClassifier<T>],
    data: &[LabeledImage<T>],
) -> Result<(DiversityReport, Vec<Vec<f64>>)> {
    use rayon::prelude::*;
    let scores: Vec<Vec<f64>> = classifiers
        .iter()
        .map(|c| {
            data.par_iter()
                .map(|d| c.score(&d.image).map(|s| s.as_f64()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let genders: Vec<Gender> = data.iter().map(|d| d.labels.gender).collect();
    Ok((report_from_scores(&scores, &genders)?, scores))
}
