//! Training, persisting and loading whole ensembles.
//!
//! Layout under the output directory:
//! `ensemble.json`, `matcher/`, and `<scheme>/san_<i>/` per member. A member
//! whose checkpoint is already complete and matches the requested seed,
//! scheme, architecture and training data is loaded instead of retrained, so
//! an interrupted run resumes at member granularity.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use serde::{Deserialize, Serialize};

use super::resample::{allocate_subjects, resample_e2, resample_e3, ResampleSummary};
use super::spec::{EnsembleSpec, Scheme};
use crate::dataset::{load_images, LabeledImage};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::labels::{AttributeLabels, Gender, Partition};
use crate::manifest::DatasetManifest;
use crate::nn::{derive_seed, OptimizerConfig};
use crate::prototype::{prototypes_from_images, PrototypeSet};
use crate::sanmodel::{
    load_matcher, read_json_file, save_matcher, write_json_file, ArchConfig, Autoencoder, FaceMatcher, FitConfig,
    GenderClassifier, LossWeights, MemberMeta, SanCheckpoint, SanTrainer, TrainSample, FORMAT_VERSION,
};
use crate::scalar::Scalar;

pub const ENSEMBLE_FILE: &str = "ensemble.json";
pub const MATCHER_DIR: &str = "matcher";

/// Hyperparameters shared by every member, plus the shared matcher's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub arch: ArchConfig,
    pub weights: LossWeights,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Pre-training of each member's auxiliary gender classifier.
    pub classifier: FitConfig,
    /// When set, the auxiliary classifier keeps training in alternation with
    /// the autoencoder using this optimizer; otherwise it stays frozen.
    pub alternate_classifier: Option<OptimizerConfig>,
    pub matcher: FitConfig,
    pub matcher_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: ArchConfig::default(),
            weights: LossWeights {
                recon: 1.0,
                matching: 1.0,
                gender: 0.1,
            },
            optimizer: OptimizerConfig::adam(5e-3),
            epochs: 8,
            batch_size: 4,
            classifier: FitConfig::default(),
            alternate_classifier: None,
            matcher: FitConfig::default(),
            matcher_seed: 0x6d61_7463,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub index: usize,
    pub seed: u64,
    pub dir: String,
    pub training_manifest_hash: String,
    pub training_images: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resample: Option<ResampleSummary>,
}

/// Contents of `ensemble.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub format_version: u32,
    pub spec: EnsembleSpec,
    pub train: TrainConfig,
    pub base_manifest_hash: String,
    pub matcher_dir: String,
    pub members: Vec<MemberRecord>,
}

/// A member's training manifest under the ensemble's scheme.
pub fn member_manifest(
    manifest: &DatasetManifest,
    spec: &EnsembleSpec,
    index: usize,
) -> Result<(DatasetManifest, Option<ResampleSummary>)> {
    match spec.scheme {
        Scheme::E1 => Ok((manifest.clone(), None)),
        Scheme::E2 => {
            let r = resample_e2(manifest, index, spec)?;
            Ok((r.manifest, Some(r.summary)))
        }
        Scheme::E3 => {
            let r = resample_e3(manifest, spec, spec.seeds[index])?;
            Ok((r.manifest, Some(r.summary)))
        }
    }
}

pub fn member_dir(root: &Path, scheme: Scheme, index: usize) -> PathBuf {
    root.join(scheme.to_string()).join(format!("san_{index}"))
}

/// Trains the shared identity matcher on the training partition, or loads
/// it from `dir` when a matching checkpoint is already there.
pub fn train_matcher(
    train: &[LabeledImage<f32>],
    cfg: &TrainConfig,
    dir: &Path,
) -> Result<Arc<FaceMatcher<f32>>> {
    if dir.join("meta.json").is_file() {
        let (m, meta) = load_matcher::<f32>(dir)?;
        if meta.seed == cfg.matcher_seed && meta.arch == cfg.arch {
            info!("reusing matcher in {}", dir.display());
            return Ok(Arc::new(m));
        }
        return Err(Error::Checkpoint(format!(
            "{} holds a matcher trained with different settings",
            dir.display()
        )));
    }
    let subjects: BTreeMap<&str, usize> = {
        let mut ids: Vec<&str> = train.iter().map(|d| d.subject_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter().enumerate().map(|(i, s)| (s, i)).collect()
    };
    let data: Vec<(&Image<f32>, usize)> = train
        .iter()
        .map(|d| (d.image.as_ref(), subjects[d.subject_id.as_str()]))
        .collect();
    info!("training matcher on {} images of {} subjects", data.len(), subjects.len());
    let mut m = FaceMatcher::new(&cfg.arch, derive_seed(cfg.matcher_seed, &[0]))?;
    let loss = m.fit_identity(&data, subjects.len(), &cfg.matcher, derive_seed(cfg.matcher_seed, &[1]))?;
    save_matcher(dir, &m, cfg.matcher_seed, loss)?;
    Ok(Arc::new(m))
}

#[allow(clippy::too_many_arguments)]
fn train_member(
    index: usize,
    seed: u64,
    spec: &EnsembleSpec,
    cfg: &TrainConfig,
    manifest: &DatasetManifest,
    protos: &PrototypeSet<f32>,
    matcher: &Arc<FaceMatcher<f32>>,
    dir: &Path,
) -> Result<SanCheckpoint<f32>> {
    let arch = &cfg.arch;
    let hash = manifest.content_hash();
    if SanCheckpoint::<f32>::exists(dir) {
        let ck = SanCheckpoint::<f32>::load(dir)?;
        let m = &ck.meta;
        if m.seed == seed && m.scheme == spec.scheme.to_string() && &m.arch == arch && m.training_manifest_hash == hash {
            info!("member {index}: reusing checkpoint in {}", dir.display());
            return Ok(ck);
        }
        return Err(Error::Checkpoint(format!(
            "{} holds a member trained with different settings",
            dir.display()
        )));
    }

    let data = load_images::<f32>(manifest, Some(Partition::Train), arch.height, arch.width)?;
    info!("member {index}: {} training images", data.len());
    let labelled: Vec<(&Image<f32>, Gender)> = data.iter().map(|d| (d.image.as_ref(), d.labels.gender)).collect();
    let mut classifier = GenderClassifier::new(arch, derive_seed(seed, &[1]))?;
    let classifier_loss = classifier.fit(&labelled, &cfg.classifier, derive_seed(seed, &[2]))?;
    info!("member {index}: classifier loss {:?}", classifier_loss.last());

    let autoencoder = Autoencoder::new(arch, derive_seed(seed, &[3]))?;
    let mut trainer = SanTrainer::new(
        autoencoder,
        classifier,
        Arc::clone(matcher),
        cfg.weights,
        cfg.optimizer,
        cfg.alternate_classifier,
    );
    let samples: Vec<TrainSample<'_, f32>> = data
        .iter()
        .map(|d| TrainSample {
            image: d.image.as_ref(),
            labels: d.labels,
        })
        .collect();
    let san_loss = trainer.fit(
        &samples,
        protos,
        cfg.epochs,
        cfg.batch_size,
        derive_seed(seed, &[4]),
        |epoch, l| {
            info!(
                "member {index} epoch {epoch}: total {:.5} recon {:.5} match {:.5} gender {:.5}",
                l.total, l.recon, l.matching, l.gender
            )
        },
    )?;

    let mut ck = SanCheckpoint {
        meta: MemberMeta {
            format_version: FORMAT_VERSION,
            dtype: String::new(),
            scheme: spec.scheme.to_string(),
            member_index: index,
            seed,
            height: arch.height,
            width: arch.width,
            feature_maps: arch.feature_maps,
            embedding_dim: arch.embedding_dim,
            weights: cfg.weights,
            arch: arch.clone(),
            training_manifest_hash: hash,
            training_images: data.len(),
            classifier_loss,
            san_loss,
            autoencoder_tensors: vec![],
            classifier_tensors: vec![],
        },
        autoencoder: trainer.autoencoder,
        classifier: trainer.classifier,
        prototypes: protos.clone(),
    };
    ck.save(dir)?;
    Ok(ck)
}

/// Trains (or resumes) every member and writes `ensemble.json`. Prototypes
/// come from the base manifest's training partition and are shared by all
/// members.
pub fn train_ensemble(
    manifest: &DatasetManifest,
    spec: &EnsembleSpec,
    cfg: &TrainConfig,
    out: &Path,
) -> Result<EnsembleModel<f32>> {
    spec.validate()?;
    cfg.arch.validate()?;
    let (h, w) = (cfg.arch.height, cfg.arch.width);
    let base = load_images::<f32>(manifest, Some(Partition::Train), h, w)?;
    if base.is_empty() {
        return Err(Error::Config("training partition is empty".into()));
    }
    let protos = prototypes_from_images(
        base.iter().map(|d| (d.labels, d.image.as_ref())),
        format!("train partition of manifest {}", manifest.content_hash()),
    )?;
    let annotate = |index: usize| {
        move |e: Error| Error::Member {
            member: index,
            source: Box::new(e),
        }
    };
    // resampling problems surface before any training time is spent; the
    // E2 allocation concerns all members at once
    if spec.scheme == Scheme::E2 {
        allocate_subjects(manifest, spec)?;
    }
    let manifests = (0..spec.members())
        .map(|i| member_manifest(manifest, spec, i).map_err(annotate(i)))
        .collect::<Result<Vec<_>>>()?;
    let matcher = train_matcher(&base, cfg, &out.join(MATCHER_DIR))?;

    let mut members = Vec::with_capacity(spec.members());
    let mut records = Vec::with_capacity(spec.members());
    for (index, (&seed, (m, resample))) in spec.seeds.iter().zip(manifests).enumerate() {
        let dir = member_dir(out, spec.scheme, index);
        let ck = train_member(index, seed, spec, cfg, &m, &protos, &matcher, &dir).map_err(annotate(index))?;
        records.push(MemberRecord {
            index,
            seed,
            dir: format!("{}/san_{index}", spec.scheme),
            training_manifest_hash: ck.meta.training_manifest_hash.clone(),
            training_images: ck.meta.training_images,
            resample,
        });
        members.push(ck);
    }
    let record = EnsembleRecord {
        format_version: FORMAT_VERSION,
        spec: spec.clone(),
        train: cfg.clone(),
        base_manifest_hash: manifest.content_hash(),
        matcher_dir: MATCHER_DIR.into(),
        members: records,
    };
    write_json_file(&out.join(ENSEMBLE_FILE), &record)?;
    Ok(EnsembleModel {
        record,
        members,
        matcher: Arc::unwrap_or_clone(matcher),
    })
}

#[derive(Debug, Clone)]
pub struct EnsembleModel<T> {
    pub record: EnsembleRecord,
    pub members: Vec<SanCheckpoint<T>>,
    pub matcher: FaceMatcher<T>,
}

impl<T: Scalar> EnsembleModel<T> {
    pub fn load(dir: &Path) -> Result<Self> {
        let record: EnsembleRecord = read_json_file(&dir.join(ENSEMBLE_FILE))?;
        let members = record
            .members
            .iter()
            .map(|m| {
                SanCheckpoint::<T>::load(&dir.join(&m.dir)).map_err(|e| Error::Member {
                    member: m.index,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (matcher, _) = load_matcher::<T>(&dir.join(&record.matcher_dir))?;
        if let Some(first) = members.first() {
            let key = |m: &MemberMeta| (m.height, m.width, m.feature_maps, m.embedding_dim);
            if members.iter().any(|m| key(&m.meta) != key(&first.meta)) {
                return Err(Error::Checkpoint("members disagree on H, W, F or D".into()));
            }
        }
        Ok(Self {
            record,
            members,
            matcher,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn input_dims(&self) -> (usize, usize) {
        let a = &self.record.train.arch;
        (a.height, a.width)
    }

    /// Member `i`'s output with the opposite-gender prototype.
    pub fn perturb_member(&self, i: usize, image: &Image<T>, labels: AttributeLabels) -> Result<Image<T>> {
        let m = &self.members[i];
        m.autoencoder.perturb(
            image,
            m.prototypes.same_gender(labels),
            m.prototypes.opposite_gender(labels),
        )
    }

    /// All `t` perturbed outputs, in member order.
    pub fn perturb(&self, image: &Image<T>, labels: AttributeLabels) -> Result<Vec<Image<T>>> {
        (0..self.len()).map(|i| self.perturb_member(i, image, labels)).collect()
    }
}
