//! On-disk SAN member and matcher checkpoints.
//!
//! A member directory holds `meta.json`, `autoencoder.bin`, `classifier.bin`
//! (see [`crate::tensor_io`] for the binary layout) and a `prototypes/`
//! archive. A matcher directory holds `meta.json` and `matcher.bin`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::ArchConfig;
use super::loss::{LossBreakdown, LossWeights};
use super::models::{Autoencoder, FaceMatcher, GenderClassifier};
use crate::error::{Error, Result};
use crate::nn::{seeded_rng, Sequential};
use crate::prototype::PrototypeSet;
use crate::scalar::Scalar;
use crate::tensor_io::{self, Tensor};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberMeta {
    pub format_version: u32,
    pub dtype: String,
    pub scheme: String,
    pub member_index: usize,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub feature_maps: usize,
    pub embedding_dim: usize,
    pub weights: LossWeights,
    pub arch: ArchConfig,
    pub training_manifest_hash: String,
    pub training_images: usize,
    pub classifier_loss: Vec<f64>,
    pub san_loss: Vec<LossBreakdown>,
    pub autoencoder_tensors: Vec<TensorInfo>,
    pub classifier_tensors: Vec<TensorInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SanCheckpoint<T> {
    pub meta: MemberMeta,
    pub autoencoder: Autoencoder<T>,
    pub classifier: GenderClassifier<T>,
    pub prototypes: PrototypeSet<T>,
}

fn infos<T: Scalar>(prefix: &str, tensors: &[Tensor<T>]) -> Vec<TensorInfo> {
    tensors
        .iter()
        .enumerate()
        .map(|(i, t)| TensorInfo {
            name: format!("{prefix}.{i}"),
            shape: t.dims.clone(),
        })
        .collect()
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<S> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

pub(crate) fn autoencoder_export<T: Scalar>(ae: &Autoencoder<T>) -> Vec<Tensor<T>> {
    let mut t = ae.body.export();
    t.extend(ae.fusion.export());
    t
}

fn import_autoencoder<T: Scalar>(arch: &ArchConfig, tensors: Vec<Tensor<T>>) -> Result<Autoencoder<T>> {
    let mut rng = seeded_rng(0);
    let body_specs = arch.autoencoder_body::<T>(&mut rng).specs();
    let fusion_specs = arch.fusion::<T>(&mut rng).specs();
    let mut it = tensors.into_iter();
    let body = Sequential::import(&body_specs, &mut it)?;
    let fusion = Sequential::import(&fusion_specs, &mut it)?;
    if it.next().is_some() {
        return Err(Error::Checkpoint("extra autoencoder tensors".into()));
    }
    Ok(Autoencoder {
        arch: arch.clone(),
        body,
        fusion,
    })
}

fn import_single<T: Scalar>(specs_of: Sequential<T>, tensors: Vec<Tensor<T>>) -> Result<Sequential<T>> {
    let mut it = tensors.into_iter();
    let net = Sequential::import(&specs_of.specs(), &mut it)?;
    if it.next().is_some() {
        return Err(Error::Checkpoint("extra tensors".into()));
    }
    Ok(net)
}

impl<T: Scalar> SanCheckpoint<T> {
    /// Fills in the tensor listing and writes the member directory.
    pub fn save(&mut self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let ae = autoencoder_export(&self.autoencoder);
        let cls = self.classifier.net.export();
        self.meta.dtype = T::DTYPE.to_string();
        self.meta.format_version = FORMAT_VERSION;
        self.meta.autoencoder_tensors = infos("autoencoder", &ae);
        self.meta.classifier_tensors = infos("classifier", &cls);
        tensor_io::write(&dir.join("autoencoder.bin"), &ae)?;
        tensor_io::write(&dir.join("classifier.bin"), &cls)?;
        self.prototypes.save(&dir.join("prototypes"))?;
        // meta last: its presence marks a complete checkpoint
        write_json(&dir.join("meta.json"), &self.meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: MemberMeta = read_json(&dir.join("meta.json"))?;
        if meta.dtype != T::DTYPE {
            return Err(Error::Checkpoint(format!("checkpoint dtype {} != {}", meta.dtype, T::DTYPE)));
        }
        meta.arch.validate()?;
        let autoencoder = import_autoencoder(&meta.arch, tensor_io::read(&dir.join("autoencoder.bin"))?)?;
        let mut rng = seeded_rng(0);
        let classifier = GenderClassifier {
            arch: meta.arch.clone(),
            net: import_single(meta.arch.classifier::<T>(&mut rng), tensor_io::read(&dir.join("classifier.bin"))?)?,
        };
        let prototypes = PrototypeSet::load(&dir.join("prototypes"))?;
        if prototypes.dims() != (meta.height, meta.width) {
            return Err(Error::Checkpoint("prototype size does not match model input".into()));
        }
        Ok(Self {
            meta,
            autoencoder,
            classifier,
            prototypes,
        })
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join("meta.json").is_file()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatcherMeta {
    pub format_version: u32,
    pub dtype: String,
    pub seed: u64,
    pub arch: ArchConfig,
    pub identity_loss: Vec<f64>,
    pub tensors: Vec<TensorInfo>,
}

pub fn save_matcher<T: Scalar>(dir: &Path, matcher: &FaceMatcher<T>, seed: u64, identity_loss: Vec<f64>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tensors = matcher.net.export();
    let meta = MatcherMeta {
        format_version: FORMAT_VERSION,
        dtype: T::DTYPE.to_string(),
        seed,
        arch: matcher.arch.clone(),
        identity_loss,
        tensors: infos("matcher", &tensors),
    };
    tensor_io::write(&dir.join("matcher.bin"), &tensors)?;
    write_json(&dir.join("meta.json"), &meta)
}

pub fn load_matcher<T: Scalar>(dir: &Path) -> Result<(FaceMatcher<T>, MatcherMeta)> {
    let meta: MatcherMeta = read_json(&dir.join("meta.json"))?;
    if meta.dtype != T::DTYPE {
        return Err(Error::Checkpoint(format!("matcher dtype {} != {}", meta.dtype, T::DTYPE)));
    }
    meta.arch.validate()?;
    let mut rng = seeded_rng(0);
    let net = import_single(meta.arch.matcher::<T>(&mut rng), tensor_io::read(&dir.join("matcher.bin"))?)?;
    Ok((
        FaceMatcher {
            arch: meta.arch.clone(),
            net,
        },
        meta,
    ))
}

pub(crate) fn write_json_file<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    write_json(path, value)
}

pub(crate) fn read_json_file<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<S> {
    read_json(path)
}
