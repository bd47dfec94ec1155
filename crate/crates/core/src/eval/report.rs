//! Report assembly from persisted score dumps, and report rebuilding.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plot::render_roc_plot;
use super::roc::{roc, RocCurve};
use super::scoring::{group_rows, Failure, ScoreRow, VariantRow, BEST, ORIGINAL};
use crate::ensemble::{reference_figures, report_from_scores, DiversityReport, Scheme};
use crate::error::{Error, Result};
use crate::labels::Gender;
use crate::photometric::PhotometricRanges;
use crate::sanmodel::{read_json_file, write_json_file};

pub const REPORT_FILE: &str = "report.json";
pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const GENDER_SCORES: &str = "gender_scores.csv";
pub const MATCHING_SCORES: &str = "matching_scores.csv";
pub const AUGMENT_VARIANTS_FILE: &str = "augment_variants.csv";
/// JSON schema the report is published against.
pub const REPORT_SCHEMA: &str = include_str!("../../schema/evaluation_report.schema.json");

/// Largest dump on which the AUC is re-derived pairwise during assembly.
pub const PAIRWISE_CHECK_LIMIT: usize = 500;

/// Run settings recorded with the report; not derived from dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub format_version: u32,
    pub seed: u64,
    pub identity_perturbation: bool,
    pub augmentation: PhotometricRanges,
    pub augment_variants: usize,
    pub impostor_cap: usize,
    pub members: usize,
    pub scheme: Option<Scheme>,
    pub predictors: Vec<String>,
    pub matchers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveEntry {
    pub name: String,
    pub san_member: String,
    pub auc: f64,
    pub eer: f64,
    pub positives: usize,
    pub negatives: usize,
    /// Path of the curve CSV relative to the report directory.
    pub curve: String,
}

/// Best-selection area against the smallest member area, compared exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceCheck {
    pub predictor: String,
    pub best_auc: f64,
    pub min_member_auc: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub name: String,
    pub images: usize,
    pub genuine_pairs: usize,
    pub impostor_pairs: usize,
    pub gender: Vec<CurveEntry>,
    pub dominance: Vec<DominanceCheck>,
    pub matching: Vec<CurveEntry>,
    pub diversity: Option<DiversityReport>,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub header: ReportHeader,
    pub datasets: Vec<DatasetReport>,
}

impl EvaluationReport {
    pub fn dataset(&self, name: &str) -> Option<&DatasetReport> {
        self.datasets.iter().find(|d| d.name == name)
    }
}

impl DatasetReport {
    pub fn gender_entry(&self, predictor: &str, member: &str) -> Option<&CurveEntry> {
        self.gender.iter().find(|e| e.name == predictor && e.san_member == member)
    }

    pub fn matching_entry(&self, matcher: &str, member: &str) -> Option<&CurveEntry> {
        self.matching.iter().find(|e| e.name == matcher && e.san_member == member)
    }
}

/// P(pos > neg) + P(tie)/2 by direct comparison of all pairs.
pub fn pairwise_auc(scores: &[(bool, f64)]) -> f64 {
    let (mut num, mut pairs) = (0u64, 0u64);
    for &(lp, sp) in scores {
        if !lp {
            continue;
        }
        for &(ln, sn) in scores {
            if ln {
                continue;
            }
            pairs += 1;
            num += match sp.partial_cmp(&sn) {
                Some(std::cmp::Ordering::Greater) => 2,
                Some(std::cmp::Ordering::Equal) => 1,
                _ => 0,
            };
        }
    }
    num as f64 / (2 * pairs) as f64
}

/// Monotone sweep from (0,0) to (1,1) with AUC and EER in range.
pub fn check_curve(curve: &RocCurve) -> Result<()> {
    let pts = &curve.points;
    let bad = |what: &str| Err(Error::Eval(format!("roc invariant violated: {what}")));
    match (pts.first(), pts.last()) {
        (Some(a), Some(b)) if a.fpr == 0.0 && a.tpr == 0.0 && b.fpr == 1.0 && b.tpr == 1.0 => {}
        _ => return bad("endpoints"),
    }
    if pts.windows(2).any(|w| w[1].fpr < w[0].fpr || w[1].tpr < w[0].tpr || w[1].threshold >= w[0].threshold) {
        return bad("monotonicity");
    }
    if !(0.0..=1.0).contains(&curve.auc) || !(0.0..=1.0).contains(&curve.eer) {
        return bad("auc/eer range");
    }
    Ok(())
}

fn safe_name(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn curve_path(dataset: &str, kind: &str, name: &str, member: &str) -> String {
    format!("{}/curves/{kind}/{}/{}.csv", safe_name(dataset), safe_name(name), safe_name(member))
}

/// Curves of one dump, in first-seen `(name, member)` order.
fn curves_of(dataset: &str, kind: &str, rows: &[ScoreRow]) -> Result<Vec<(CurveEntry, RocCurve)>> {
    group_rows(rows)
        .into_iter()
        .map(|((name, member), scores)| {
            let curve = roc(&scores).map_err(|e| Error::Eval(format!("{kind} curve {name}/{member}: {e}")))?;
            check_curve(&curve)?;
            if scores.len() <= PAIRWISE_CHECK_LIMIT && (pairwise_auc(&scores) - curve.auc).abs() > 1e-9 {
                return Err(Error::Eval(format!("{kind} curve {name}/{member}: auc disagrees with pairwise statistic")));
            }
            let entry = CurveEntry {
                curve: curve_path(dataset, kind, &name, &member),
                name,
                san_member: member,
                auc: curve.auc,
                eer: curve.eer,
                positives: curve.positives,
                negatives: curve.negatives,
            };
            Ok((entry, curve))
        })
        .collect()
}

fn dominance(gender: &[(CurveEntry, RocCurve)]) -> Result<Vec<DominanceCheck>> {
    let mut names: Vec<&str> = Vec::new();
    for (e, _) in gender {
        if !names.contains(&e.name.as_str()) {
            names.push(&e.name);
        }
    }
    let mut out = Vec::new();
    for name in names {
        let of = |pred: &dyn Fn(&str) -> bool| -> Vec<&(CurveEntry, RocCurve)> {
            gender.iter().filter(|(e, _)| e.name == name && pred(&e.san_member)).collect()
        };
        let best = of(&|m| m == BEST);
        let members = of(&|m| m.parse::<usize>().is_ok());
        let (Some((best_e, best_c)), Some(min)) =
            (best.first(), members.iter().min_by_key(|(_, c)| c.auc_numerator()))
        else {
            continue;
        };
        let holds = best_c.auc_numerator() <= min.1.auc_numerator();
        if !holds {
            return Err(Error::Eval(format!(
                "best-selection dominance violated for {name}: {} > {}",
                best_e.auc, min.0.auc
            )));
        }
        out.push(DominanceCheck {
            predictor: name.to_string(),
            best_auc: best_e.auc,
            min_member_auc: min.0.auc,
            holds,
        });
    }
    Ok(out)
}

/// Error and entropy-diversity figures from the auxiliary classifiers'
/// scores on originals (`aux-<i>` rows).
fn diversity(gender_rows: &[ScoreRow], members: usize, scheme: Option<Scheme>) -> Result<Option<DiversityReport>> {
    if members == 0 {
        return Ok(None);
    }
    let mut scores = Vec::with_capacity(members);
    let mut genders: Option<Vec<Gender>> = None;
    for i in 0..members {
        let name = format!("aux-{i}");
        let rows: Vec<&ScoreRow> = gender_rows
            .iter()
            .filter(|r| r.predictor == name && r.san_member == ORIGINAL)
            .collect();
        if rows.is_empty() {
            return Ok(None);
        }
        let g: Vec<Gender> = rows
            .iter()
            .map(|r| if r.label == 1 { Gender::Male } else { Gender::Female })
            .collect();
        match &genders {
            None => genders = Some(g),
            Some(prev) if *prev != g => return Err(Error::Eval("auxiliary dumps cover different images".into())),
            Some(_) => {}
        }
        scores.push(rows.iter().map(|r| r.score).collect());
    }
    let mut report = report_from_scores(&scores, &genders.unwrap_or_default())?;
    report.reference = scheme.map(reference_figures);
    Ok(Some(report))
}

/// Everything computed for one dataset, before anything is written.
pub struct AssembledDataset {
    pub report: DatasetReport,
    pub gender_curves: Vec<RocCurve>,
    pub matching_curves: Vec<RocCurve>,
}

/// Builds a dataset section purely from score rows.
pub fn assemble_dataset(
    name: &str,
    gender_rows: &[ScoreRow],
    matching_rows: &[ScoreRow],
    header: &ReportHeader,
    failures: Vec<Failure>,
) -> Result<AssembledDataset> {
    let gender = curves_of(name, "gender", gender_rows)?;
    let matching = curves_of(name, "matching", matching_rows)?;
    let dominance = dominance(&gender)?;
    let mut images: Vec<&str> = gender_rows
        .iter()
        .filter(|r| r.san_member == ORIGINAL)
        .map(|r| r.image_id.as_str())
        .collect();
    images.sort_unstable();
    images.dedup();
    let (genuine_pairs, impostor_pairs) = matching
        .first()
        .map(|(e, _)| (e.positives, e.negatives))
        .unwrap_or((0, 0));
    let report = DatasetReport {
        name: name.to_string(),
        images: images.len(),
        genuine_pairs,
        impostor_pairs,
        diversity: diversity(gender_rows, header.members, header.scheme)?,
        dominance,
        failures,
        gender: gender.iter().map(|(e, _)| e.clone()).collect(),
        matching: matching.iter().map(|(e, _)| e.clone()).collect(),
    };
    Ok(AssembledDataset {
        report,
        gender_curves: gender.into_iter().map(|(_, c)| c).collect(),
        matching_curves: matching.into_iter().map(|(_, c)| c).collect(),
    })
}

fn dataset_dir(root: &Path, dataset: &str) -> PathBuf {
    root.join(safe_name(dataset))
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S], header: &[&str]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Serde(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    if rows.is_empty() {
        w.write_record(header).map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<S>> {
    let csv_err = |e: csv::Error| Error::Serde(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

const SCORE_HEADER: [&str; 5] = ["predictor", "san_member", "image_id", "label", "score"];
const VARIANT_HEADER: [&str; 7] = ["predictor", "san_member", "image_id", "variant", "gain", "bias", "score"];

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    read_csv(path)
}

pub fn read_variants(path: &Path) -> Result<Vec<VariantRow>> {
    read_csv(path)
}

/// Writes the dumps for one dataset and returns the section assembled from
/// them; curve CSVs and plots are written alongside.
pub fn write_dataset(
    root: &Path,
    name: &str,
    gender_rows: &[ScoreRow],
    matching_rows: &[ScoreRow],
    variants: &[VariantRow],
    header: &ReportHeader,
    failures: Vec<Failure>,
) -> Result<DatasetReport> {
    let dir = dataset_dir(root, name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_csv(&dir.join(GENDER_SCORES), gender_rows, &SCORE_HEADER)?;
    write_csv(&dir.join(MATCHING_SCORES), matching_rows, &SCORE_HEADER)?;
    write_csv(&dir.join(AUGMENT_VARIANTS_FILE), variants, &VARIANT_HEADER)?;

    let assembled = assemble_dataset(name, gender_rows, matching_rows, header, failures)?;
    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    for (kind, entries, curves) in [
        ("gender", &assembled.report.gender, &assembled.gender_curves),
        ("matching", &assembled.report.matching, &assembled.matching_curves),
    ] {
        for (e, c) in entries.iter().zip(curves) {
            let path = root.join(&e.curve);
            let parent = path.parent().expect("curve path has a parent");
            fs::create_dir_all(parent).map_err(|err| Error::io(parent, err))?;
            fs::write(&path, c.to_csv()).map_err(|err| Error::io(&path, err))?;
        }
        let mut names: Vec<&str> = Vec::new();
        for e in entries {
            if !names.contains(&e.name.as_str()) {
                names.push(&e.name);
            }
        }
        for n in names {
            let series: Vec<(&str, &RocCurve)> = entries
                .iter()
                .zip(curves)
                .filter(|(e, _)| e.name == n)
                .map(|(e, c)| (e.san_member.as_str(), c))
                .collect();
            render_roc_plot(&series, &plots.join(format!("{kind}_{}.png", safe_name(n))))?;
        }
    }
    Ok(assembled.report)
}

pub fn write_report(root: &Path, report: &EvaluationReport) -> Result<()> {
    write_json_file(&root.join(REPORT_FILE), report)
}

pub fn load_report(root: &Path) -> Result<EvaluationReport> {
    read_json_file(&root.join(REPORT_FILE))
}

/// Recomputes every number of a written report from its dumps. Only the
/// header and the failure lists are taken from `report.json`.
pub fn rebuild_report(root: &Path) -> Result<EvaluationReport> {
    let stored = load_report(root)?;
    let datasets = stored
        .datasets
        .iter()
        .map(|d| {
            let dir = dataset_dir(root, &d.name);
            let gender = read_scores(&dir.join(GENDER_SCORES))?;
            let matching = read_scores(&dir.join(MATCHING_SCORES))?;
            Ok(assemble_dataset(&d.name, &gender, &matching, &stored.header, d.failures.clone())?.report)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport {
        header: stored.header,
        datasets,
    })
}
