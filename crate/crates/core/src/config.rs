//! Run configuration shared by every command, stored as TOML.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleSpec, Scheme, TrainConfig, DEFAULT_MEMBERS};
use crate::error::{Error, Result};
use crate::eval::{RegistryConfig, ScoringSettings};
use crate::labels::Partition;
use crate::photometric::PhotometricRanges;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; member, resampling and selection seeds derive from it.
    pub seed: u64,
    pub paths: PathsConfig,
    pub model: TrainConfig,
    pub ensemble: EnsembleConfig,
    pub evaluation: EvaluationConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Training manifest (CSV). Required by every command except `synth`
    /// and `init`.
    pub manifest: Option<PathBuf>,
    /// Output root; falls back to `$ENSAN_OUTPUT_ROOT`, then `./runs`.
    pub output: Option<PathBuf>,
}

/// Ensemble shape; member seeds are derived from the global seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub scheme: Scheme,
    pub members: usize,
    pub subject_fraction: f64,
    pub subject_duplication: usize,
    pub race_fraction: f64,
    pub race_duplication: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        let s = EnsembleSpec::default();
        Self {
            scheme: s.scheme,
            members: DEFAULT_MEMBERS,
            subject_fraction: s.subject_fraction,
            subject_duplication: s.subject_duplication,
            race_fraction: s.race_fraction,
            race_duplication: s.race_duplication,
        }
    }
}

/// An extra evaluation dataset next to the manifest's test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalDatasetConfig {
    pub name: String,
    pub manifest: PathBuf,
    /// Restrict to one partition; all records when absent.
    #[serde(default)]
    pub partition: Option<Partition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub registry: RegistryConfig,
    pub augmentation: PhotometricRanges,
    pub impostor_cap: usize,
    /// Name given to the training manifest's test partition in reports.
    pub test_name: String,
    pub datasets: Vec<EvalDatasetConfig>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            registry: RegistryConfig::default(),
            augmentation: PhotometricRanges::default(),
            impostor_cap: 10_000,
            test_name: "test".into(),
            datasets: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn ensemble_spec(&self) -> EnsembleSpec {
        let e = &self.ensemble;
        EnsembleSpec {
            subject_fraction: e.subject_fraction,
            subject_duplication: e.subject_duplication,
            race_fraction: e.race_fraction,
            race_duplication: e.race_duplication,
            ..EnsembleSpec::new(e.scheme, e.members, self.seed)
        }
    }

    pub fn scoring(&self) -> ScoringSettings {
        ScoringSettings {
            seed: self.seed,
            augmentation: self.evaluation.augmentation,
            impostor_cap: self.evaluation.impostor_cap,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses and validates, including that every referenced input exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_toml(&text)?;
        cfg.validate()?;
        cfg.check_paths()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_toml()?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.ensemble.members == 0 {
            return Err(Error::Config("ensemble.members must be at least 1".into()));
        }
        if self.model.epochs == 0 || self.model.batch_size == 0 {
            return Err(Error::Config("model.epochs and model.batch_size must be positive".into()));
        }
        let a = &self.evaluation.augmentation;
        if a.gain.0 > a.gain.1 || a.bias.0 > a.bias.1 || a.gain.0 < 0.0 {
            return Err(Error::Config(format!("invalid augmentation ranges {a:?}")));
        }
        let mut names = vec![self.evaluation.test_name.as_str()];
        for d in &self.evaluation.datasets {
            if names.contains(&d.name.as_str()) {
                return Err(Error::Config(format!("duplicate evaluation dataset name {:?}", d.name)));
            }
            names.push(&d.name);
        }
        self.evaluation.registry.validate()?;
        self.ensemble_spec().validate()
    }

    pub fn check_paths(&self) -> Result<()> {
        let inputs = self
            .paths
            .manifest
            .iter()
            .chain(self.evaluation.datasets.iter().map(|d| &d.manifest));
        for p in inputs {
            if !p.is_file() {
                return Err(Error::Config(format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}
