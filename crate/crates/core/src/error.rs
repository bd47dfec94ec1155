use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("manifest parse error at line {line}: {message}")]
    ManifestParse { line: usize, message: String },

    #[error("unknown label token {token:?} in column {column}")]
    UnknownLabel { column: &'static str, token: String },

    #[error("partition overlap: subject {subject:?} appears in both train and test")]
    PartitionOverlap { subject: String },

    #[error("unresolvable image reference {0}")]
    MissingImage(PathBuf),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("pixel value {value} outside [0,1]")]
    PixelRange { value: f64 },

    #[error("no images for group {group} in the selected partition")]
    EmptyGroup { group: String },

    #[error("no race predictions for subject {subject:?}")]
    MissingRaceVote { subject: String },

    #[error("non-finite {term} loss ({value})")]
    NonFiniteLoss { term: &'static str, value: f64 },

    #[error("non-finite parameter in {tensor}")]
    NonFiniteParam { tensor: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("resampling infeasible: {0}")]
    Resample(String),

    #[error("roc needs both classes (positives {positives}, negatives {negatives})")]
    SingleClass { positives: usize, negatives: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("member {member}: {source}")]
    Member {
        member: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable kind, used by the CLI's structured error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Image { .. } => "image",
            Error::ManifestParse { .. } => "manifest_parse",
            Error::UnknownLabel { .. } => "unknown_label",
            Error::PartitionOverlap { .. } => "partition_overlap",
            Error::MissingImage(_) => "missing_image",
            Error::Shape { .. } => "shape_mismatch",
            Error::PixelRange { .. } => "pixel_range",
            Error::EmptyGroup { .. } => "empty_group",
            Error::MissingRaceVote { .. } => "missing_race_vote",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::NonFiniteParam { .. } => "non_finite_param",
            Error::Config(_) => "config",
            Error::Resample(_) => "resample",
            Error::SingleClass { .. } => "single_class",
            Error::Checkpoint(_) => "checkpoint",
            Error::Member { source, .. } => source.kind(),
            Error::Eval(_) => "eval",
            Error::Serde(_) => "serde",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
