//! ROC curves with exact AUC and interpolated EER.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores `>= threshold` are called positive. The first point uses +inf.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub eer: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// Builds the curve from `(is_positive, score)` pairs. Equal scores enter the
/// sweep together, so ties contribute a diagonal segment.
pub fn roc(scores: &[(bool, f64)]) -> Result<RocCurve> {
    if let Some(&(_, s)) = scores.iter().find(|(_, s)| s.is_nan()) {
        return Err(Error::Eval(format!("score {s} is not a number")));
    }
    let positives = scores.iter().filter(|(l, _)| *l).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass { positives, negatives });
    }
    let mut sorted: Vec<(bool, f64)> = scores.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1));

    let (p, n) = (positives as f64, negatives as f64);
    let mut counts: Vec<(f64, u64, u64)> = vec![(f64::INFINITY, 0, 0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].1;
        while i < sorted.len() && sorted[i].1 == s {
            if sorted[i].0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        counts.push((s, tp, fp));
    }

    // twice the area in units of 1/(P*N), kept integral so that comparisons
    // between curves are exact
    let doubled: u128 = counts
        .windows(2)
        .map(|w| u128::from(w[1].2 - w[0].2) * u128::from(w[1].1 + w[0].1))
        .sum();
    let auc = doubled as f64 / (2.0 * p * n);

    let points: Vec<RocPoint> = counts
        .iter()
        .map(|&(threshold, tp, fp)| RocPoint {
            threshold,
            fpr: fp as f64 / n,
            tpr: tp as f64 / p,
        })
        .collect();
    let eer = equal_error_rate(&points);
    Ok(RocCurve {
        points,
        auc,
        eer,
        positives,
        negatives,
    })
}

/// Rate where FPR equals 1 - TPR, interpolated linearly along the curve.
fn equal_error_rate(points: &[RocPoint]) -> f64 {
    let gap = |q: &RocPoint| q.fpr + q.tpr - 1.0;
    for w in points.windows(2) {
        let (a, b) = (gap(&w[0]), gap(&w[1]));
        if b >= 0.0 {
            if b == a {
                return w[1].fpr;
            }
            let t = -a / (b - a);
            return w[0].fpr + t * (w[1].fpr - w[0].fpr);
        }
    }
    points.last().map_or(0.5, |q| q.fpr)
}

impl RocCurve {
    /// Exact comparison of areas, free of floating-point rounding.
    pub fn auc_numerator(&self) -> u128 {
        (self.auc * 2.0 * self.positives as f64 * self.negatives as f64).round() as u128
    }

    /// CSV rows `threshold,fpr,tpr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for q in &self.points {
            out.push_str(&format!("{},{},{}\n", q.threshold, q.fpr, q.tpr));
        }
        out
    }
}
