//! Scoring originals and ensemble outputs into dump rows.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::{augment_eval, image_seed};
use super::predictors::{similarity, FaceMatcherIface, RegisteredPredictor};
use crate::dataset::LabeledImage;
use crate::ensemble::EnsembleModel;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::labels::{AttributeLabels, Gender};
use crate::nn::{derive_seed, seeded_rng};
use crate::photometric::PhotometricRanges;
use crate::selection::{select_best, select_random};

pub const ORIGINAL: &str = "original";
pub const BEST: &str = "best";
pub const RANDOM: &str = "random";

/// One image with its `t` perturbed versions.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub id: String,
    pub subject_id: String,
    pub labels: AttributeLabels,
    pub original: Arc<Image<f32>>,
    pub perturbed: Vec<Image<f32>>,
}

#[derive(Debug, Clone)]
pub struct EvalSet {
    pub dataset: String,
    pub members: usize,
    pub items: Vec<EvalItem>,
}

impl EvalSet {
    /// Runs every member on every image. With `identity`, each member's
    /// output is the input itself, which must reproduce the baselines.
    pub fn from_ensemble(
        dataset: &str,
        data: Vec<LabeledImage<f32>>,
        ensemble: &EnsembleModel<f32>,
        identity: bool,
    ) -> Result<Self> {
        let items = data
            .into_par_iter()
            .map(|d| {
                let perturbed = if identity {
                    vec![d.image.as_ref().clone(); ensemble.len()]
                } else {
                    ensemble.perturb(&d.image, d.labels)?
                };
                Ok(EvalItem {
                    id: d.id,
                    subject_id: d.subject_id,
                    labels: d.labels,
                    original: d.image,
                    perturbed,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dataset: dataset.to_string(),
            members: ensemble.len(),
            items,
        })
    }
}

/// Row of `gender_scores.csv` / `matching_scores.csv`. `label` is 1 for
/// male (gender) or genuine (matching), 0 otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub predictor: String,
    pub san_member: String,
    pub image_id: String,
    pub label: u8,
    pub score: f64,
}

/// Row of `augment_variants.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub predictor: String,
    pub san_member: String,
    pub image_id: String,
    pub variant: usize,
    pub gain: f64,
    pub bias: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub name: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringSettings {
    pub seed: u64,
    pub augmentation: PhotometricRanges,
    pub impostor_cap: usize,
}

#[derive(Debug, Default)]
pub struct Scored {
    pub rows: Vec<ScoreRow>,
    pub variants: Vec<VariantRow>,
    pub failures: Vec<Failure>,
}

fn member_label(i: usize) -> String {
    i.to_string()
}

fn check_score(name: &str, s: f64) -> Result<f64> {
    if s.is_finite() && (0.0..=1.0).contains(&s) {
        Ok(s)
    } else {
        Err(Error::Eval(format!("predictor {name} returned score {s} outside [0, 1]")))
    }
}

type ImageScores = (f64, Vec<VariantRow>);

fn score_image(
    p: &RegisteredPredictor,
    set: &EvalSet,
    item: &EvalItem,
    member: &str,
    image: &Image<f32>,
    settings: &ScoringSettings,
) -> Result<ImageScores> {
    if !p.augment {
        return Ok((check_score(&p.name, p.predictor.score(image)?)?, Vec::new()));
    }
    let seed = image_seed(settings.seed, &set.dataset, &item.id);
    let a = augment_eval(p.predictor.as_ref(), image, &settings.augmentation, seed)?;
    let rows = a
        .variants
        .iter()
        .enumerate()
        .map(|(k, v)| {
            check_score(&p.name, v.score)?;
            Ok(VariantRow {
                predictor: p.name.clone(),
                san_member: member.to_string(),
                image_id: item.id.clone(),
                variant: k,
                gain: v.gain,
                bias: v.bias,
                score: v.score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((a.mean, rows))
}

fn gender_rows(p: &RegisteredPredictor, set: &EvalSet, settings: &ScoringSettings) -> Result<(Vec<ScoreRow>, Vec<VariantRow>)> {
    let t = set.members;
    // per item: original score then member scores
    let per_item: Vec<Vec<ImageScores>> = set
        .items
        .par_iter()
        .map(|item| {
            let mut out = Vec::with_capacity(t + 1);
            out.push(score_image(p, set, item, ORIGINAL, &item.original, settings)?);
            for (i, y) in item.perturbed.iter().enumerate() {
                out.push(score_image(p, set, item, &member_label(i), y, settings)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let row = |member: String, item: &EvalItem, score: f64| ScoreRow {
        predictor: p.name.clone(),
        san_member: member,
        image_id: item.id.clone(),
        label: u8::from(item.labels.gender == Gender::Male),
        score,
    };
    let mut rows = Vec::with_capacity(set.items.len() * (t + 3));
    let mut variants = Vec::new();
    for (item, scores) in set.items.iter().zip(&per_item) {
        rows.push(row(ORIGINAL.into(), item, scores[0].0));
    }
    for i in 0..t {
        for (item, scores) in set.items.iter().zip(&per_item) {
            rows.push(row(member_label(i), item, scores[i + 1].0));
        }
    }
    for (item, scores) in set.items.iter().zip(&per_item) {
        let member: Vec<f64> = scores[1..].iter().map(|s| s.0).collect();
        let (_, best) = select_best(&member, item.labels.gender)?;
        rows.push(row(BEST.into(), item, best));
    }
    for (item, scores) in set.items.iter().zip(&per_item) {
        let k = select_random(t, settings.seed, &item.id)?;
        rows.push(row(RANDOM.into(), item, scores[k + 1].0));
    }
    for scores in &per_item {
        for s in scores {
            variants.extend(s.1.iter().cloned());
        }
    }
    Ok((rows, variants))
}

/// Scores originals, every member's outputs, and the best/random policies
/// with each predictor. A failing predictor is reported and skipped.
pub fn eval_gender(predictors: &[RegisteredPredictor], set: &EvalSet, settings: &ScoringSettings) -> Scored {
    let mut out = Scored::default();
    for p in predictors {
        match gender_rows(p, set, settings) {
            Ok((rows, variants)) => {
                out.rows.extend(rows);
                out.variants.extend(variants);
            }
            Err(e) => {
                log::warn!("predictor {} failed: {e}", p.name);
                out.failures.push(Failure {
                    name: p.name.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    out
}

/// Ordered image-index pairs `(a, b)` scored as similarity(original a,
/// version of b).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pairs {
    pub genuine: Vec<(usize, usize)>,
    pub impostor: Vec<(usize, usize)>,
}

/// All ordered same-subject pairs with `a != b`, and at most `cap`
/// cross-subject pairs drawn without replacement (all of them if fewer).
pub fn make_pairs(subjects: &[&str], cap: usize, seed: u64) -> Result<Pairs> {
    let n = subjects.len();
    let mut genuine = Vec::new();
    let mut impostor_count = 0usize;
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            if subjects[a] == subjects[b] {
                genuine.push((a, b));
            } else {
                impostor_count += 1;
            }
        }
    }
    if genuine.is_empty() {
        return Err(Error::Eval("no genuine pairs: every subject has a single image".into()));
    }
    let all_impostors = || {
        (0..n).flat_map(move |a| (0..n).map(move |b| (a, b))).filter(|&(a, b)| subjects[a] != subjects[b])
    };
    let impostor = if impostor_count <= cap {
        all_impostors().collect()
    } else {
        let mut rng = seeded_rng(seed);
        let mut picks = sample(&mut rng, impostor_count, cap).into_vec();
        picks.sort_unstable();
        let mut it = picks.into_iter().peekable();
        let mut out = Vec::with_capacity(cap);
        for (k, pair) in all_impostors().enumerate() {
            match it.peek() {
                Some(&p) if p == k => {
                    out.push(pair);
                    it.next();
                }
                Some(_) => {}
                None => break,
            }
        }
        out
    };
    Ok(Pairs { genuine, impostor })
}

fn matching_rows(
    m: &dyn FaceMatcherIface,
    set: &EvalSet,
    pairs: &Pairs,
    settings: &ScoringSettings,
) -> Result<Vec<ScoreRow>> {
    let t = set.members;
    let embed = |img: &Image<f32>| m.embed(img);
    let originals: Vec<Vec<f64>> = set.items.par_iter().map(|it| embed(&it.original)).collect::<Result<_>>()?;
    let members: Vec<Vec<Vec<f64>>> = (0..t)
        .map(|i| set.items.par_iter().map(|it| embed(&it.perturbed[i])).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let choice: Vec<usize> = set
        .items
        .iter()
        .map(|it| select_random(t, settings.seed, &it.id))
        .collect::<Result<_>>()?;

    let labelled: Vec<(u8, (usize, usize))> = pairs
        .genuine
        .iter()
        .map(|&p| (1, p))
        .chain(pairs.impostor.iter().map(|&p| (0, p)))
        .collect();
    let mut rows = Vec::with_capacity(labelled.len() * (t + 2));
    let mut emit = |member: String, other: Vec<&Vec<f64>>| {
        for &(label, (a, b)) in &labelled {
            rows.push(ScoreRow {
                predictor: m.name().to_string(),
                san_member: member.clone(),
                image_id: format!("{}|{}", set.items[a].id, set.items[b].id),
                label,
                score: similarity(&originals[a], other[b]),
            });
        }
    };
    emit(ORIGINAL.into(), originals.iter().collect());
    for (i, emb) in members.iter().enumerate() {
        emit(member_label(i), emb.iter().collect());
    }
    emit(RANDOM.into(), choice.iter().enumerate().map(|(b, &k)| &members[k][b]).collect());
    Ok(rows)
}

/// Genuine/impostor similarity rows for originals, every member and the
/// random policy. A failing matcher is reported and skipped.
pub fn eval_matching(
    matchers: &[Arc<dyn FaceMatcherIface>],
    set: &EvalSet,
    settings: &ScoringSettings,
) -> Result<(Scored, Pairs)> {
    let subjects: Vec<&str> = set.items.iter().map(|it| it.subject_id.as_str()).collect();
    let pairs = make_pairs(&subjects, settings.impostor_cap, derive_seed(settings.seed, &[0x7061_6972]))?;
    let mut out = Scored::default();
    for m in matchers {
        match matching_rows(m.as_ref(), set, &pairs, settings) {
            Ok(rows) => out.rows.extend(rows),
            Err(e) => {
                log::warn!("matcher {} failed: {e}", m.name());
                out.failures.push(Failure {
                    name: m.name().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    Ok((out, pairs))
}

/// `(predictor, san_member)` and its labelled scores.
pub type RowGroup = ((String, String), Vec<(bool, f64)>);

/// Groups rows by `(predictor, san_member)` preserving first-seen order.
pub fn group_rows(rows: &[ScoreRow]) -> Vec<RowGroup> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut map: BTreeMap<(String, String), Vec<(bool, f64)>> = BTreeMap::new();
    for r in rows {
        let key = (r.predictor.clone(), r.san_member.clone());
        let entry = map.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        entry.push((r.label == 1, r.score));
    }
    order
        .into_iter()
        .map(|k| {
            let v = map.remove(&k).expect("inserted above");
            (k, v)
        })
        .collect()
}
