//! Attribute-group face prototypes: the pixelwise mean face of each of the
//! eight (gender, age, race) groups.

use std::fs;
use std::path::Path;

use crate::dataset::load_images;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::labels::{AttributeGroup, AttributeLabels, Partition};
use crate::manifest::DatasetManifest;
use crate::scalar::Scalar;
use crate::tensor_io::{self, Tensor};

/// Exact-valued companion of the per-group PNG files in an archive.
pub const ARCHIVE_DATA_FILE: &str = "prototypes.bin";

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet<T> {
    /// Indexed by [`AttributeGroup::index`].
    images: Vec<Image<T>>,
    pub source: String,
}

impl<T: Scalar> PrototypeSet<T> {
    pub fn from_images(images: Vec<Image<T>>, source: impl Into<String>) -> Result<Self> {
        if images.len() != AttributeGroup::COUNT {
            return Err(Error::Config(format!(
                "prototype set needs {} images, got {}",
                AttributeGroup::COUNT,
                images.len()
            )));
        }
        let dims = images[0].dims();
        for img in &images {
            img.ensure_dims(dims.0, dims.1)?;
        }
        Ok(Self {
            images,
            source: source.into(),
        })
    }

    pub fn get(&self, group: AttributeGroup) -> &Image<T> {
        &self.images[group.index()]
    }

    pub fn dims(&self) -> (usize, usize) {
        self.images[0].dims()
    }

    pub fn iter(&self) -> impl Iterator<Item = (AttributeGroup, &Image<T>)> {
        AttributeGroup::all().zip(&self.images)
    }

    pub fn same_gender(&self, labels: AttributeLabels) -> &Image<T> {
        same_gender_prototype(labels, self)
    }

    pub fn opposite_gender(&self, labels: AttributeLabels) -> &Image<T> {
        opposite_gender_prototype(labels, self)
    }

    /// Writes `<token>.png` (16-bit, for inspection) per group plus the exact
    /// values in [`ARCHIVE_DATA_FILE`].
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (group, img) in self.iter() {
            img.save_png16(&dir.join(format!("{}.png", group.token())))?;
        }
        let tensors: Vec<Tensor<T>> = self
            .images
            .iter()
            .map(|img| Tensor {
                dims: vec![img.height(), img.width()],
                data: img.pixels().to_vec(),
            })
            .collect();
        tensor_io::write(&dir.join(ARCHIVE_DATA_FILE), &tensors)?;
        fs::write(dir.join("source.txt"), &self.source).map_err(|e| Error::io(dir, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let tensors = tensor_io::read::<T>(&dir.join(ARCHIVE_DATA_FILE))?;
        let images = tensors
            .into_iter()
            .map(|t| match t.dims.as_slice() {
                &[h, w] => Image::new(h, w, t.data),
                _ => Err(Error::Checkpoint("prototype tensor must be 2-D".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        let source = fs::read_to_string(dir.join("source.txt")).unwrap_or_default();
        Self::from_images(images, source)
    }
}

/// Pixelwise mean per group over `(labels, image)` pairs. Sums accumulate in
/// f64.
pub fn prototypes_from_images<'a, T: Scalar>(
    items: impl IntoIterator<Item = (AttributeLabels, &'a Image<T>)>,
    source: impl Into<String>,
) -> Result<PrototypeSet<T>> {
    let mut sums: Vec<Option<(Vec<f64>, usize, (usize, usize))>> = vec![None; AttributeGroup::COUNT];
    for (labels, img) in items {
        let slot = &mut sums[labels.group().index()];
        let (acc, n, dims) =
            slot.get_or_insert_with(|| (vec![0.0; img.pixels().len()], 0, img.dims()));
        img.ensure_dims(dims.0, dims.1)?;
        for (a, p) in acc.iter_mut().zip(img.pixels()) {
            *a += p.as_f64();
        }
        *n += 1;
    }
    let mut images = Vec::with_capacity(AttributeGroup::COUNT);
    for (group, slot) in AttributeGroup::all().zip(sums) {
        let (acc, n, (h, w)) = slot.ok_or_else(|| Error::EmptyGroup {
            group: group.token(),
        })?;
        let inv = n as f64;
        let pixels = acc.into_iter().map(|s| T::of((s / inv).clamp(0.0, 1.0))).collect();
        images.push(Image::new(h, w, pixels)?);
    }
    PrototypeSet::from_images(images, source)
}

pub fn compute_prototypes<T: Scalar>(
    manifest: &DatasetManifest,
    partition: Partition,
    height: usize,
    width: usize,
) -> Result<PrototypeSet<T>> {
    let items = load_images::<T>(manifest, Some(partition), height, width)?;
    prototypes_from_images(
        items.iter().map(|it| (it.labels, it.image.as_ref())),
        format!("{}:{}", manifest.content_hash(), partition),
    )
}

pub fn same_gender_prototype<T: Scalar>(labels: AttributeLabels, protos: &PrototypeSet<T>) -> &Image<T> {
    protos.get(labels.group())
}

pub fn opposite_gender_prototype<T: Scalar>(
    labels: AttributeLabels,
    protos: &PrototypeSet<T>,
) -> &Image<T> {
    protos.get(labels.with_gender_flipped().group())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{labels_of, Age, Gender, Race};

    fn flat(v: f64) -> Image<f64> {
        Image::filled(2, 3, v)
    }

    fn distinct_set() -> PrototypeSet<f64> {
        PrototypeSet::from_images(
            AttributeGroup::all().map(|g| flat(0.1 * g.index() as f64)).collect(),
            "test",
        )
        .unwrap()
    }

    #[test]
    fn single_and_pair_means() {
        let a = Image::new(1, 2, vec![0.2, 0.4]).unwrap();
        let b = Image::new(1, 2, vec![0.6, 1.0]).unwrap();
        let mut items: Vec<(AttributeLabels, &Image<f64>)> = Vec::new();
        let fillers: Vec<Image<f64>> = AttributeGroup::all().map(|_| Image::filled(1, 2, 0.5)).collect();
        let target = AttributeLabels::new(Gender::Male, Age::Young, Race::White);
        for g in AttributeGroup::all() {
            if g != target.group() {
                items.push((labels_of(g), &fillers[g.index()]));
            }
        }
        let mut one = items.clone();
        one.push((target, &a));
        let p = prototypes_from_images(one, "t").unwrap();
        assert_eq!(p.get(target.group()), &a);

        items.push((target, &a));
        items.push((target, &b));
        let p = prototypes_from_images(items, "t").unwrap();
        let expect = [0.4, 0.7];
        for (x, e) in p.get(target.group()).pixels().iter().zip(expect) {
            assert!((x - e).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_group_is_named() {
        let img = flat(0.5);
        let items = AttributeGroup::all()
            .filter(|g| g.token() != "O-F-B")
            .map(|g| (labels_of(g), &img));
        let err = prototypes_from_images(items, "t").unwrap_err();
        assert!(err.to_string().contains("O-F-B"), "{err}");
    }

    #[test]
    fn worked_example_opposite_gender() {
        let p = distinct_set();
        let yfw = AttributeLabels::new(Gender::Female, Age::Young, Race::White);
        let ymw = AttributeLabels::new(Gender::Male, Age::Young, Race::White);
        assert_eq!(p.opposite_gender(yfw), p.get(ymw.group()));
        let omb = AttributeLabels::new(Gender::Male, Age::Old, Race::Black);
        let ofb = AttributeLabels::new(Gender::Female, Age::Old, Race::Black);
        assert_eq!(p.opposite_gender(omb), p.get(ofb.group()));
        assert_eq!(p.same_gender(yfw), p.get(yfw.group()));
    }

    #[test]
    fn flip_is_involution_and_lookups_differ() {
        let p = distinct_set();
        for g in AttributeGroup::all() {
            let l = labels_of(g);
            assert_eq!(p.opposite_gender(l.with_gender_flipped()), p.same_gender(l));
            assert_ne!(p.opposite_gender(l), p.same_gender(l));
        }
    }

    #[test]
    fn degenerate_equal_gender_means() {
        let imgs = AttributeGroup::all()
            .map(|g| flat(0.1 * (g.index() % 4) as f64))
            .collect();
        let p = PrototypeSet::from_images(imgs, "t").unwrap();
        for g in AttributeGroup::all() {
            let l = labels_of(g);
            assert_eq!(p.opposite_gender(l), p.same_gender(l));
        }
    }

    #[test]
    fn archive_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let imgs = AttributeGroup::all()
            .map(|g| Image::new(2, 2, vec![1.0 / 3.0, 0.1 * g.index() as f32, 0.123_456_79, 1.0]).unwrap())
            .collect();
        let p = PrototypeSet::from_images(imgs, "src").unwrap();
        p.save(dir.path()).unwrap();
        for g in AttributeGroup::all() {
            assert!(dir.path().join(format!("{}.png", g.token())).is_file());
        }
        assert_eq!(PrototypeSet::<f32>::load(dir.path()).unwrap(), p);
    }
}
