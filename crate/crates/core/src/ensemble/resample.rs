//! Member training sets for the subject-based and race-based schemes.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};

use super::spec::EnsembleSpec;
use crate::error::{Error, Result};
use crate::labels::{Partition, Race};
use crate::manifest::{DatasetManifest, Record};
use crate::nn::{permutation, seeded_rng};

/// A member's training manifest: every input record followed by the
/// appended duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub manifest: DatasetManifest,
    pub summary: ResampleSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleSummary {
    pub selected_subjects: Vec<String>,
    /// Distinct training images chosen for duplication.
    pub selected_images: usize,
    pub appended: usize,
}

fn append_copies(manifest: &DatasetManifest, chosen: &[&Record], factor: usize) -> Result<DatasetManifest> {
    let mut records = manifest.records.clone();
    for r in chosen {
        for _ in 0..factor {
            records.push((*r).clone());
        }
    }
    DatasetManifest::new(manifest.root.clone(), records)
}

fn training_records(manifest: &DatasetManifest) -> Result<Vec<&Record>> {
    let train: Vec<&Record> = manifest.partition(Partition::Train).collect();
    if train.is_empty() {
        return Err(Error::Resample("training partition is empty".into()));
    }
    Ok(train)
}

/// Disjoint subject subsets, one per member. Subjects are taken in a shuffled
/// order shared by all members; each member takes consecutive subjects until
/// the next one would push it past `subject_fraction` of the training images.
pub fn allocate_subjects(manifest: &DatasetManifest, spec: &EnsembleSpec) -> Result<Vec<Vec<String>>> {
    let train = training_records(manifest)?;
    let mut per_subject: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &train {
        *per_subject.entry(r.subject_id.as_str()).or_default() += 1;
    }
    let subjects: Vec<(&str, usize)> = per_subject.into_iter().collect();
    let mut rng = seeded_rng(spec.resample_seed);
    let order = permutation(&mut rng, subjects.len());
    let limit = spec.subject_fraction * train.len() as f64;

    let mut next = 0;
    let mut out = Vec::with_capacity(spec.members());
    for member in 0..spec.members() {
        let mut taken = Vec::new();
        let mut images = 0usize;
        while next < order.len() {
            let (id, n) = subjects[order[next]];
            if (images + n) as f64 > limit {
                break;
            }
            images += n;
            taken.push(id.to_string());
            next += 1;
        }
        if taken.is_empty() {
            return Err(Error::Resample(format!(
                "cannot give member {member} a disjoint subject subset within {:.0}% of {} training images",
                100.0 * spec.subject_fraction,
                train.len()
            )));
        }
        out.push(taken);
    }
    Ok(out)
}

/// Member `index`'s E2 training manifest.
pub fn resample_e2(manifest: &DatasetManifest, index: usize, spec: &EnsembleSpec) -> Result<Resampled> {
    if index >= spec.members() {
        return Err(Error::Resample(format!("member {index} out of range for t = {}", spec.members())));
    }
    let mut alloc = allocate_subjects(manifest, spec)?;
    let subjects = alloc.swap_remove(index);
    let set: BTreeSet<&str> = subjects.iter().map(String::as_str).collect();
    let chosen: Vec<&Record> = training_records(manifest)?
        .into_iter()
        .filter(|r| set.contains(r.subject_id.as_str()))
        .collect();
    Ok(Resampled {
        manifest: append_copies(manifest, &chosen, spec.subject_duplication)?,
        summary: ResampleSummary {
            selected_images: chosen.len(),
            appended: chosen.len() * spec.subject_duplication,
            selected_subjects: subjects,
        },
    })
}

/// E3 training manifest: `floor(race_fraction * N_black)` random black
/// training images, each appended `race_duplication` times.
pub fn resample_e3(manifest: &DatasetManifest, spec: &EnsembleSpec, seed: u64) -> Result<Resampled> {
    let black: Vec<&Record> = training_records(manifest)?
        .into_iter()
        .filter(|r| r.effective_race() == Race::Black)
        .collect();
    if black.is_empty() {
        return Err(Error::Resample("no black-labeled training images".into()));
    }
    let k = (spec.race_fraction * black.len() as f64).floor() as usize;
    if k == 0 {
        warn!(
            "{:.0}% of {} black training images rounds down to zero; nothing duplicated",
            100.0 * spec.race_fraction,
            black.len()
        );
    }
    let mut rng = seeded_rng(seed);
    let mut picks = permutation(&mut rng, black.len());
    picks.truncate(k);
    picks.sort_unstable();
    let chosen: Vec<&Record> = picks.iter().map(|&i| black[i]).collect();
    let subjects: BTreeSet<String> = chosen.iter().map(|r| r.subject_id.clone()).collect();
    Ok(Resampled {
        manifest: append_copies(manifest, &chosen, spec.race_duplication)?,
        summary: ResampleSummary {
            selected_images: chosen.len(),
            appended: chosen.len() * spec.race_duplication,
            selected_subjects: subjects.into_iter().collect(),
        },
    })
}
