//! Pluggable gender predictors and face matchers, and the in-repo stand-ins
//! for systems the ensemble never saw during training.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledImage;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::labels::Gender;
use crate::nn::derive_seed;
use crate::photometric::PhotometricRanges;
use crate::sanmodel::{cosine_f64, ArchConfig, FaceMatcher, FitConfig, GenderClassifier};
use crate::synth::{render, FactorStrengths, SyntheticSpec};

/// Scores a face with P(male) in [0, 1].
pub trait GenderPredictor: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, image: &Image<f32>) -> Result<f64>;
}

/// Maps a face to an embedding compared by cosine similarity.
pub trait FaceMatcherIface: Send + Sync {
    fn name(&self) -> &str;
    fn embed(&self, image: &Image<f32>) -> Result<Vec<f64>>;
}

/// Cosine similarity in [-1, 1]; 0 if either embedding is zero.
pub fn similarity(a: &[f64], b: &[f64]) -> f64 {
    cosine_f64(a.iter().copied(), b.iter().copied())
}

pub struct CnnPredictor {
    pub name: String,
    pub classifier: GenderClassifier<f32>,
}

impl GenderPredictor for CnnPredictor {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, image: &Image<f32>) -> Result<f64> {
        Ok(f64::from(self.classifier.score(image)?))
    }
}

pub struct CnnMatcher {
    pub name: String,
    pub matcher: FaceMatcher<f32>,
}

impl FaceMatcherIface for CnnMatcher {
    fn name(&self) -> &str {
        &self.name
    }

    fn embed(&self, image: &Image<f32>) -> Result<Vec<f64>> {
        Ok(self.matcher.embed(image)?.0.into_iter().map(f64::from).collect())
    }
}

/// Means over a `grid x grid` partition of the image.
fn block_means(image: &Image<f32>, grid: usize) -> Vec<f64> {
    let (h, w) = image.dims();
    let mut sums = vec![0.0; grid * grid];
    let mut counts = vec![0usize; grid * grid];
    for r in 0..h {
        for c in 0..w {
            let k = (r * grid / h) * grid + c * grid / w;
            sums[k] += f64::from(image.get(r, c));
            counts[k] += 1;
        }
    }
    sums.iter().zip(&counts).map(|(s, &n)| s / n.max(1) as f64).collect()
}

/// Logistic regression on standardized block means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelLogistic {
    pub name: String,
    pub grid: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl PixelLogistic {
    /// Full-batch gradient descent on mean log-loss with a small L2 penalty.
    pub fn fit(name: &str, data: &[(&Image<f32>, Gender)], grid: usize, iterations: usize) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Config("pixel scorer needs training data".into()));
        }
        let feats: Vec<Vec<f64>> = data.iter().map(|(img, _)| block_means(img, grid)).collect();
        let d = grid * grid;
        let n = feats.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| feats.iter().map(|f| f[j]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..d)
            .map(|j| {
                let var = feats.iter().map(|f| (f[j] - mean[j]).powi(2)).sum::<f64>() / n;
                1.0 / var.sqrt().max(1e-6)
            })
            .collect();
        let z: Vec<Vec<f64>> = feats
            .iter()
            .map(|f| (0..d).map(|j| (f[j] - mean[j]) * scale[j]).collect())
            .collect();
        let (mut w, mut b) = (vec![0.0; d], 0.0);
        let (lr, l2) = (0.5, 1e-3);
        for _ in 0..iterations {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (x, (_, g)) in z.iter().zip(data) {
                let p = logistic(dot(&w, x) + b);
                let e = p - g.target();
                gb += e;
                for (a, v) in gw.iter_mut().zip(x) {
                    *a += e * v;
                }
            }
            for (wj, gj) in w.iter_mut().zip(&gw) {
                *wj -= lr * (gj / n + l2 * *wj);
            }
            b -= lr * gb / n;
        }
        Ok(Self {
            name: name.to_string(),
            grid,
            mean,
            scale,
            weights: w,
            bias: b,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl GenderPredictor for PixelLogistic {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, image: &Image<f32>) -> Result<f64> {
        let f = block_means(image, self.grid);
        let z: f64 = f
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .zip(&self.weights)
            .map(|(((x, m), s), w)| (x - m) * s * w)
            .sum();
        Ok(logistic(z + self.bias))
    }
}

/// Mean-centered block means compared by cosine.
pub struct PixelMatcher {
    pub name: String,
    pub grid: usize,
}

impl FaceMatcherIface for PixelMatcher {
    fn name(&self) -> &str {
        &self.name
    }

    fn embed(&self, image: &Image<f32>) -> Result<Vec<f64>> {
        let f = block_means(image, self.grid);
        let m = f.iter().sum::<f64>() / f.len() as f64;
        Ok(f.into_iter().map(|v| v - m).collect())
    }
}

/// A predictor and whether it is scored through eval-time augmentation.
#[derive(Clone)]
pub struct RegisteredPredictor {
    pub name: String,
    pub predictor: Arc<dyn GenderPredictor>,
    pub augment: bool,
}

#[derive(Clone, Default)]
pub struct Registry {
    pub predictors: Vec<RegisteredPredictor>,
    pub matchers: Vec<Arc<dyn FaceMatcherIface>>,
}

impl Registry {
    pub fn add_predictor(&mut self, predictor: Arc<dyn GenderPredictor>, augment: bool) {
        self.predictors.push(RegisteredPredictor {
            name: predictor.name().to_string(),
            predictor,
            augment,
        });
    }

    pub fn add_matcher(&mut self, matcher: Arc<dyn FaceMatcherIface>) {
        self.matchers.push(matcher);
    }
}

/// Built-in unseen predictors.
pub const PREDICTOR_CATALOG: [&str; 4] = ["cnn-alt", "cnn-shifted-aug", "cnn-shifted-aug-eval", "pixel-logistic"];
/// Built-in unseen matchers (the ensemble's own matcher is added as `aux-matcher`).
pub const MATCHER_CATALOG: [&str; 2] = ["cnn-shifted", "pixel-cosine"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistryConfig {
    pub predictors: Vec<String>,
    pub matchers: Vec<String>,
    /// Also evaluate with each member's auxiliary classifier and the shared
    /// auxiliary matcher (seen during training; a sanity anchor).
    pub include_auxiliary: bool,
    pub fit: FitConfig,
    pub seed: u64,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        Self {
            predictors: PREDICTOR_CATALOG.iter().map(|s| s.to_string()).collect(),
            matchers: MATCHER_CATALOG.iter().map(|s| s.to_string()).collect(),
            include_auxiliary: true,
            fit: FitConfig::default(),
            seed: 0x756e_7365,
        }
    }
}

impl RegistryConfig {
    pub fn validate(&self) -> Result<()> {
        for p in &self.predictors {
            if !PREDICTOR_CATALOG.contains(&p.as_str()) {
                return Err(Error::Config(format!(
                    "unknown predictor {p:?}; available: {}",
                    PREDICTOR_CATALOG.join(", ")
                )));
            }
        }
        for m in &self.matchers {
            if !MATCHER_CATALOG.contains(&m.as_str()) {
                return Err(Error::Config(format!(
                    "unknown matcher {m:?}; available: {}",
                    MATCHER_CATALOG.join(", ")
                )));
            }
        }
        Ok(())
    }
}

/// Architecture variants so the stand-ins differ from the auxiliaries.
fn alt_arch(base: &ArchConfig) -> ArchConfig {
    ArchConfig {
        classifier_channels: vec![6, 12, 12],
        ..base.clone()
    }
}

fn wide_arch(base: &ArchConfig) -> ArchConfig {
    ArchConfig {
        classifier_channels: vec![12, 16, 24],
        matcher_channels: vec![12, 16, 24],
        embedding_dim: 64,
        ..base.clone()
    }
}

/// A differently seeded synthetic population with shifted factor strengths
/// and heavier noise.
fn shifted_data(arch: &ArchConfig, seed: u64) -> Result<Vec<(Image<f32>, Gender, String)>> {
    let spec = SyntheticSpec {
        height: arch.height,
        width: arch.width,
        subjects_per_group: 5,
        images_per_subject: 6,
        test_subjects_per_group: 0,
        strengths: FactorStrengths {
            gender: 0.12,
            age: 0.15,
            race: 0.10,
            identity: 0.14,
        },
        noise: 0.05,
        seed,
        ..SyntheticSpec::default()
    };
    Ok(render(&spec)?
        .into_iter()
        .map(|it| (it.image.cast(), it.record.gender, it.record.subject_id))
        .collect())
}

/// Trains the selected catalog entries. `train` is the evaluation run's
/// training partition; shifted entries train on their own synthetic data.
pub fn build_registry(train: &[LabeledImage<f32>], arch: &ArchConfig, cfg: &RegistryConfig) -> Result<Registry> {
    cfg.validate()?;
    let wants = |n: &str| cfg.predictors.iter().any(|p| p == n);
    let wants_m = |n: &str| cfg.matchers.iter().any(|p| p == n);
    let mut reg = Registry::default();
    let labelled: Vec<(&Image<f32>, Gender)> = train.iter().map(|d| (d.image.as_ref(), d.labels.gender)).collect();

    let need_shifted = wants("cnn-shifted-aug") || wants("cnn-shifted-aug-eval") || wants_m("cnn-shifted");
    let shifted = if need_shifted {
        shifted_data(arch, derive_seed(cfg.seed, &[10]))?
    } else {
        Vec::new()
    };

    // one augmentation-trained network backs both the plain and the
    // eval-time-augmented entries
    let shifted_net: Option<Arc<dyn GenderPredictor>> =
        if wants("cnn-shifted-aug") || wants("cnn-shifted-aug-eval") {
            let data: Vec<(&Image<f32>, Gender)> = shifted.iter().map(|(i, g, _)| (i, *g)).collect();
            let mut c = GenderClassifier::new(&wide_arch(arch), derive_seed(cfg.seed, &[3]))?;
            let fit = FitConfig {
                augment: Some(PhotometricRanges::default()),
                ..cfg.fit.clone()
            };
            c.fit(&data, &fit, derive_seed(cfg.seed, &[4]))?;
            Some(Arc::new(CnnPredictor {
                name: "cnn-shifted-aug".into(),
                classifier: c,
            }))
        } else {
            None
        };

    for name in PREDICTOR_CATALOG {
        if !wants(name) {
            continue;
        }
        match name {
            "cnn-alt" => {
                let mut c = GenderClassifier::new(&alt_arch(arch), derive_seed(cfg.seed, &[1]))?;
                c.fit(&labelled, &cfg.fit, derive_seed(cfg.seed, &[2]))?;
                reg.add_predictor(
                    Arc::new(CnnPredictor {
                        name: name.into(),
                        classifier: c,
                    }),
                    false,
                );
            }
            "cnn-shifted-aug" | "cnn-shifted-aug-eval" => {
                let net = shifted_net.clone().expect("built when requested");
                reg.predictors.push(RegisteredPredictor {
                    name: name.into(),
                    predictor: net,
                    augment: name == "cnn-shifted-aug-eval",
                });
            }
            "pixel-logistic" => {
                reg.add_predictor(Arc::new(PixelLogistic::fit(name, &labelled, 8, 300)?), false);
            }
            _ => unreachable!("catalog entries are exhaustive"),
        }
    }

    for name in MATCHER_CATALOG {
        if !wants_m(name) {
            continue;
        }
        match name {
            "cnn-shifted" => {
                let mut ids: Vec<&str> = shifted.iter().map(|(_, _, s)| s.as_str()).collect();
                ids.sort_unstable();
                ids.dedup();
                let data: Vec<(&Image<f32>, usize)> = shifted
                    .iter()
                    .map(|(i, _, s)| (i, ids.binary_search(&s.as_str()).expect("known subject")))
                    .collect();
                let mut m = FaceMatcher::new(&wide_arch(arch), derive_seed(cfg.seed, &[5]))?;
                m.fit_identity(&data, ids.len(), &cfg.fit, derive_seed(cfg.seed, &[6]))?;
                reg.add_matcher(Arc::new(CnnMatcher {
                    name: name.into(),
                    matcher: m,
                }));
            }
            "pixel-cosine" => reg.add_matcher(Arc::new(PixelMatcher {
                name: name.into(),
                grid: 16,
            })),
            _ => unreachable!("catalog entries are exhaustive"),
        }
    }
    Ok(reg)
}

/// Adds each member's auxiliary classifier as `aux-<i>` and the shared
/// auxiliary matcher as `aux-matcher`.
pub fn add_auxiliary(reg: &mut Registry, ensemble: &crate::ensemble::EnsembleModel<f32>) {
    for (i, m) in ensemble.members.iter().enumerate() {
        reg.add_predictor(
            Arc::new(CnnPredictor {
                name: format!("aux-{i}"),
                classifier: m.classifier.clone(),
            }),
            false,
        );
    }
    reg.add_matcher(Arc::new(CnnMatcher {
        name: "aux-matcher".into(),
        matcher: ensemble.matcher.clone(),
    }));
}
