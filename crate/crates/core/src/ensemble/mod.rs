//! Ensembles of SANs trained under the E1/E2/E3 diversification schemes.

mod diversity;
mod resample;
mod spec;
mod train;

pub use diversity::{
    entropy_diversity, error_report, reference_figures, report_from_scores, DiversityReport, ReferenceFigures,
    DECISION_THRESHOLD,
};
pub use resample::{allocate_subjects, resample_e2, resample_e3, ResampleSummary, Resampled};
pub use spec::{EnsembleSpec, Scheme, DEFAULT_MEMBERS};
pub use train::{
    member_dir, member_manifest, train_ensemble, train_matcher, EnsembleModel, EnsembleRecord, MemberRecord,
    TrainConfig, ENSEMBLE_FILE, MATCHER_DIR,
};
