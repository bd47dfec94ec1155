//! In-memory labeled image sets materialized from a manifest.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use crate::error::Result;
use crate::image::Image;
use crate::labels::{AttributeLabels, Partition};
use crate::manifest::DatasetManifest;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct LabeledImage<T> {
    /// Image path as written in the manifest; unique per distinct file.
    pub id: String,
    pub subject_id: String,
    pub labels: AttributeLabels,
    pub image: Arc<Image<T>>,
}

/// Loads the records of `partition` (all records if `None`), in manifest
/// order. Duplicated records share one decoded image. Every image must be
/// `height`x`width`.
pub fn load_images<T: Scalar>(
    manifest: &DatasetManifest,
    partition: Option<Partition>,
    height: usize,
    width: usize,
) -> Result<Vec<LabeledImage<T>>> {
    let mut cache: HashMap<PathBuf, Arc<Image<T>>> = HashMap::new();
    let mut out = Vec::new();
    for r in &manifest.records {
        if partition.is_some_and(|p| p != r.partition) {
            continue;
        }
        let path = manifest.resolve(r);
        let image = match cache.get(&path) {
            Some(img) => Arc::clone(img),
            None => {
                let img = Image::<T>::load(&path)?;
                img.ensure_dims(height, width)?;
                let img = Arc::new(img);
                cache.insert(path, Arc::clone(&img));
                img
            }
        };
        out.push(LabeledImage {
            id: r.path.clone(),
            subject_id: r.subject_id.clone(),
            labels: r.labels(),
            image,
        });
    }
    Ok(out)
}
