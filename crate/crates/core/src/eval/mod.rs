//! Evaluation against gender predictors and face matchers that were not
//! used to train the ensemble.

mod augment;
mod plot;
mod predictors;
mod report;
mod roc;
mod run;
mod scoring;

pub use augment::{augment_eval, image_seed, mean_score, AugmentedScore, Variant, AUGMENT_VARIANTS};
pub use plot::render_roc_plot;
pub use predictors::{
    add_auxiliary, build_registry, similarity, CnnMatcher, CnnPredictor, FaceMatcherIface, GenderPredictor,
    PixelLogistic, PixelMatcher, RegisteredPredictor, Registry, RegistryConfig, MATCHER_CATALOG, PREDICTOR_CATALOG,
};
pub use report::{
    assemble_dataset, check_curve, load_report, pairwise_auc, read_scores, read_variants, rebuild_report,
    write_dataset, write_report, AssembledDataset, CurveEntry, DatasetReport, DominanceCheck, EvaluationReport,
    ReportHeader, AUGMENT_VARIANTS_FILE, GENDER_SCORES, MATCHING_SCORES, PAIRWISE_CHECK_LIMIT, REPORT_FILE,
    REPORT_FORMAT_VERSION, REPORT_SCHEMA,
};
pub use roc::{roc, RocCurve, RocPoint};
pub use run::{evaluate, EvalDataset};
pub use scoring::{
    eval_gender, eval_matching, group_rows, make_pairs, EvalItem, EvalSet, Failure, Pairs, RowGroup, ScoreRow, Scored,
    ScoringSettings, VariantRow, BEST, ORIGINAL, RANDOM,
};
