//! End-to-end evaluation of an ensemble over several datasets.

use std::fs;
use std::path::Path;

use super::predictors::Registry;
use super::report::{write_dataset, write_report, EvaluationReport, ReportHeader, REPORT_FORMAT_VERSION};
use super::scoring::{eval_gender, eval_matching, EvalSet, ScoringSettings};
use super::AUGMENT_VARIANTS;
use crate::dataset::LabeledImage;
use crate::ensemble::EnsembleModel;
use crate::error::{Error, Result};

/// Named evaluation dataset.
pub struct EvalDataset {
    pub name: String,
    pub images: Vec<LabeledImage<f32>>,
}

/// Perturbs every dataset with the ensemble (or, with `identity`, passes
/// inputs through unchanged), scores with the registry, and writes dumps,
/// curves, plots and `report.json` under `out`.
pub fn evaluate(
    ensemble: &EnsembleModel<f32>,
    registry: &Registry,
    datasets: Vec<EvalDataset>,
    settings: &ScoringSettings,
    identity: bool,
    out: &Path,
) -> Result<EvaluationReport> {
    if datasets.is_empty() {
        return Err(Error::Config("no evaluation datasets".into()));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let header = ReportHeader {
        format_version: REPORT_FORMAT_VERSION,
        seed: settings.seed,
        identity_perturbation: identity,
        augmentation: settings.augmentation,
        augment_variants: AUGMENT_VARIANTS,
        impostor_cap: settings.impostor_cap,
        members: ensemble.len(),
        scheme: Some(ensemble.record.spec.scheme),
        predictors: registry.predictors.iter().map(|p| p.name.clone()).collect(),
        matchers: registry.matchers.iter().map(|m| m.name().to_string()).collect(),
    };
    let mut sections = Vec::with_capacity(datasets.len());
    for ds in datasets {
        log::info!("evaluating {} ({} images)", ds.name, ds.images.len());
        let set = EvalSet::from_ensemble(&ds.name, ds.images, ensemble, identity)?;
        let gender = eval_gender(&registry.predictors, &set, settings);
        let (matching, _) = eval_matching(&registry.matchers, &set, settings)?;
        let mut failures = gender.failures;
        failures.extend(matching.failures);
        sections.push(write_dataset(
            out,
            &ds.name,
            &gender.rows,
            &matching.rows,
            &gender.variants,
            &header,
            failures,
        )?);
    }
    let report = EvaluationReport {
        header,
        datasets: sections,
    };
    write_report(out, &report)?;
    Ok(report)
}
