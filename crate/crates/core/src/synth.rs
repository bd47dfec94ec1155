//! Seeded face-like synthetic datasets.
//!
//! Every image is a smooth face template plus one fixed blob per attribute
//! (sign given by the label), a persistent per-subject identity pattern and
//! pixel noise, clamped to [0, 1].

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::labels::{AttributeGroup, AttributeLabels, Gender, Partition};
use crate::manifest::{DatasetManifest, Record};
use crate::nn::{derive_seed, seeded_rng};

pub const MIN_SIZE: usize = 16;
pub const SPEC_FILE: &str = "synthetic_spec.json";
pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Png,
    Pgm,
}

impl ImageFormat {
    fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Pgm => "pgm",
        }
    }
}

/// Peak amplitudes of the additive patterns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorStrengths {
    pub gender: f64,
    pub age: f64,
    pub race: f64,
    pub identity: f64,
}

impl Default for FactorStrengths {
    fn default() -> Self {
        Self {
            gender: 0.15,
            age: 0.12,
            race: 0.12,
            identity: 0.12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub height: usize,
    pub width: usize,
    pub subjects_per_group: usize,
    pub images_per_subject: usize,
    /// Subjects per group assigned to the test partition, capped so at least
    /// one subject per group stays in training.
    pub test_subjects_per_group: usize,
    pub strengths: FactorStrengths,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise: f64,
    pub seed: u64,
    pub format: ImageFormat,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            subjects_per_group: 4,
            images_per_subject: 8,
            test_subjects_per_group: 1,
            strengths: FactorStrengths::default(),
            noise: 0.03,
            seed: 0,
            format: ImageFormat::Png,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height < MIN_SIZE || self.width < MIN_SIZE {
            return Err(Error::Config(format!(
                "synthetic images must be at least {MIN_SIZE}x{MIN_SIZE}, got {}x{}",
                self.height, self.width
            )));
        }
        if self.subjects_per_group == 0 || self.images_per_subject == 0 {
            return Err(Error::Config("subject and image counts must be at least 1".into()));
        }
        let s = self.strengths;
        let values = [self.noise, s.gender, s.age, s.race, s.identity];
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("noise and factor strengths must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn test_subjects(&self) -> usize {
        self.test_subjects_per_group.min(self.subjects_per_group - 1)
    }

    pub fn image_count(&self) -> usize {
        AttributeGroup::COUNT * self.subjects_per_group * self.images_per_subject
    }
}

/// Blob centers as fractions of (height, width).
const GENDER_CENTER: (f64, f64) = (0.72, 0.5);
const AGE_CENTER: (f64, f64) = (0.28, 0.27);
const RACE_CENTER: (f64, f64) = (0.28, 0.73);
const BLOB_SIGMA: f64 = 0.09;
const IDENTITY_BLOBS: usize = 6;
/// Minimum identity-to-attribute center distance, in attribute sigmas.
const IDENTITY_CLEARANCE: f64 = 2.5;

#[derive(Debug, Clone)]
struct Blob {
    row: f64,
    col: f64,
    sigma: f64,
    amplitude: f64,
}

impl Blob {
    fn at(&self, r: f64, c: f64) -> f64 {
        let d2 = (r - self.row).powi(2) + (c - self.col).powi(2);
        self.amplitude * (-d2 / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// Unit-amplitude pattern of one attribute blob, for probes and tests.
pub fn attribute_pattern(height: usize, width: usize, center: (f64, f64)) -> Vec<f64> {
    let blob = Blob {
        row: center.0 * height as f64,
        col: center.1 * width as f64,
        sigma: BLOB_SIGMA * height.min(width) as f64,
        amplitude: 1.0,
    };
    render_blobs(height, width, &[blob])
}

pub fn gender_pattern(height: usize, width: usize) -> Vec<f64> {
    attribute_pattern(height, width, GENDER_CENTER)
}

fn render_blobs(height: usize, width: usize, blobs: &[Blob]) -> Vec<f64> {
    let mut out = vec![0.0; height * width];
    for r in 0..height {
        for c in 0..width {
            out[r * width + c] = blobs.iter().map(|b| b.at(r as f64 + 0.5, c as f64 + 0.5)).sum();
        }
    }
    out
}

/// Soft-edged elliptical face on a dark background.
pub fn face_template(height: usize, width: usize) -> Vec<f64> {
    let (cy, cx) = (height as f64 / 2.0, width as f64 / 2.0);
    let (ay, ax) = (0.42 * height as f64, 0.34 * width as f64);
    let edge = 0.04 * height.min(width) as f64;
    let mut out = vec![0.0; height * width];
    for r in 0..height {
        for c in 0..width {
            let dy = (r as f64 + 0.5 - cy) / ay;
            let dx = (c as f64 + 0.5 - cx) / ax;
            let rho = (dy * dy + dx * dx).sqrt();
            let inside = 1.0 / (1.0 + ((rho - 1.0) * ay / edge).exp());
            out[r * width + c] = 0.2 + 0.35 * inside;
        }
    }
    out
}

fn sign(positive: bool) -> f64 {
    if positive {
        1.0
    } else {
        -1.0
    }
}

fn identity_blobs(spec: &SyntheticSpec, subject_seed: u64) -> Vec<Blob> {
    let (h, w) = (spec.height as f64, spec.width as f64);
    let attr_sigma = BLOB_SIGMA * h.min(w);
    let centers = [GENDER_CENTER, AGE_CENTER, RACE_CENTER].map(|(r, c)| (r * h, c * w));
    let mut rng = seeded_rng(subject_seed);
    let mut blobs = Vec::with_capacity(IDENTITY_BLOBS);
    let mut attempts = 0;
    while blobs.len() < IDENTITY_BLOBS && attempts < 10_000 {
        attempts += 1;
        let row = rng.random_range(0.12..0.88) * h;
        let col = rng.random_range(0.18..0.82) * w;
        let clear = centers
            .iter()
            .all(|&(r, c)| ((row - r).powi(2) + (col - c).powi(2)).sqrt() >= IDENTITY_CLEARANCE * attr_sigma);
        if !clear {
            continue;
        }
        let sigma = rng.random_range(0.05..0.09) * h.min(w);
        let amplitude = spec.strengths.identity * sign(rng.random_bool(0.5)) * rng.random_range(0.6..1.0);
        blobs.push(Blob {
            row,
            col,
            sigma,
            amplitude,
        });
    }
    blobs
}

/// One generated image before quantization.
#[derive(Debug, Clone)]
pub struct SyntheticImage {
    pub record: Record,
    pub image: Image<f64>,
}

fn subject_id(group: AttributeGroup, index: usize) -> String {
    format!("{}-s{index:02}", group.token())
}

/// Renders the whole dataset in memory, in manifest order (group, subject,
/// image).
pub fn render(spec: &SyntheticSpec) -> Result<Vec<SyntheticImage>> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let template = face_template(h, w);
    let attr = |center: (f64, f64), amplitude: f64| Blob {
        row: center.0 * h as f64,
        col: center.1 * w as f64,
        sigma: BLOB_SIGMA * h.min(w) as f64,
        amplitude,
    };
    let n_test = spec.test_subjects();
    let mut jobs = Vec::new();
    for group in AttributeGroup::all() {
        for s in 0..spec.subjects_per_group {
            for k in 0..spec.images_per_subject {
                jobs.push((group, s, k));
            }
        }
    }
    let ext = spec.format.extension();
    jobs.par_iter()
        .map(|&(group, s, k)| {
            let labels: AttributeLabels = group.labels();
            let g = group.index() as u64;
            let subject_seed = derive_seed(spec.seed, &[g, s as u64]);
            let mut blobs = identity_blobs(spec, subject_seed);
            let st = spec.strengths;
            blobs.push(attr(GENDER_CENTER, st.gender * sign(labels.gender == Gender::Male)));
            blobs.push(attr(AGE_CENTER, st.age * sign(labels.age == crate::labels::Age::Old)));
            blobs.push(attr(RACE_CENTER, st.race * sign(labels.race == crate::labels::Race::White)));
            let pattern = render_blobs(h, w, &blobs);
            let mut rng = seeded_rng(derive_seed(subject_seed, &[k as u64]));
            let normal = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).expect("valid std");
            let pixels: Vec<f64> = template
                .iter()
                .zip(&pattern)
                .map(|(&t, &p)| {
                    let n = if spec.noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                    t + p + n
                })
                .collect();
            let image = Image::from_clamped(h, w, pixels)?;
            let sid = subject_id(group, s);
            let partition = if s >= spec.subjects_per_group - n_test {
                Partition::Test
            } else {
                Partition::Train
            };
            let record = Record {
                path: format!("images/{sid}_{k:02}.{ext}"),
                subject_id: sid,
                gender: labels.gender,
                age: labels.age,
                race: labels.race,
                partition,
                race_override: None,
            };
            Ok(SyntheticImage { record, image })
        })
        .collect()
}

/// Writes images, `manifest.csv` and `synthetic_spec.json` under `dir` and returns
/// the manifest (rooted at `dir`).
pub fn generate(spec: &SyntheticSpec, dir: &Path) -> Result<DatasetManifest> {
    let items = render(spec)?;
    let images_dir = dir.join("images");
    fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    items
        .par_iter()
        .map(|it| it.image.save(&dir.join(&it.record.path)))
        .collect::<Result<()>>()?;
    let manifest = DatasetManifest::new(dir, items.into_iter().map(|it| it.record).collect())?;
    manifest.save(&dir.join(MANIFEST_FILE))?;
    let spec_path = dir.join(SPEC_FILE);
    let text = serde_json::to_string_pretty(spec).map_err(|e| Error::Serde(e.to_string()))?;
    fs::write(&spec_path, text + "\n").map_err(|e| Error::io(&spec_path, e))?;
    Ok(manifest)
}

pub fn load_spec(path: &Path) -> Result<SyntheticSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_images_and_zero_counts() {
        let small = SyntheticSpec {
            height: 15,
            ..SyntheticSpec::default()
        };
        assert!(matches!(render(&small), Err(Error::Config(_))));
        let empty = SyntheticSpec {
            images_per_subject: 0,
            ..SyntheticSpec::default()
        };
        assert!(render(&empty).is_err());
    }

    #[test]
    fn identity_blobs_keep_clear_of_attributes() {
        let spec = SyntheticSpec::default();
        for s in 0..20 {
            assert_eq!(identity_blobs(&spec, s).len(), IDENTITY_BLOBS);
        }
    }

    #[test]
    fn derive_seed_separates_streams() {
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_ne!(derive_seed(1, &[0]), derive_seed(2, &[0]));
        assert_eq!(derive_seed(5, &[3]), derive_seed(5, &[3]));
    }
}
