use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use ensan::dataset::{load_images, LabeledImage};
use ensan::ensemble::{error_report, train_ensemble, EnsembleModel, EnsembleSpec, Scheme, TrainConfig};
use ensan::error::{Error, Result};
use ensan::eval::*;
use ensan::image::Image;
use ensan::labels::Partition;
use ensan::nn::seeded_rng;
use ensan::photometric::PhotometricRanges;
use ensan::sanmodel::{ArchConfig, FitConfig};
use ensan::selection::select_best;
use ensan::synth::{generate, SyntheticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn auc_matches_pairwise_statistic_on_random_sets() {
    let mut rng = seeded_rng(11);
    for case in 0..50 {
        let n = rng.random_range(2..=500);
        // coarse scores on half the cases so ties are common
        let levels = if case % 2 == 0 { 7.0 } else { 1e6 };
        let mut scores: Vec<(bool, f64)> = (0..n)
            .map(|_| {
                let label = rng.random_bool(0.4);
                let s: f64 = rng.random::<f64>() + if label { 0.2 } else { 0.0 };
                (label, (s * levels).floor() / levels)
            })
            .collect();
        scores[0].0 = true;
        scores[1].0 = false;
        let c = roc(&scores).unwrap();
        check_curve(&c).unwrap();
        assert!((c.auc - pairwise_auc(&scores)).abs() < 1e-9, "case {case}");
    }
}

struct Constant(f64);
impl GenderPredictor for Constant {
    fn name(&self) -> &str {
        "constant"
    }
    fn score(&self, _: &Image<f32>) -> Result<f64> {
        Ok(self.0)
    }
}

struct MeanPixel;
impl GenderPredictor for MeanPixel {
    fn name(&self) -> &str {
        "mean-pixel"
    }
    fn score(&self, img: &Image<f32>) -> Result<f64> {
        let (h, w) = img.dims();
        let mut s = 0.0;
        for r in 0..h {
            for c in 0..w {
                s += f64::from(img.get(r, c));
            }
        }
        Ok(s / (h * w) as f64)
    }
}

/// Declares its own randomness through a seeded generator.
struct Noisy(Mutex<ChaCha8Rng>);
impl GenderPredictor for Noisy {
    fn name(&self) -> &str {
        "noisy"
    }
    fn score(&self, _: &Image<f32>) -> Result<f64> {
        Ok(self.0.lock().unwrap().random())
    }
}

fn gradient_image() -> Image<f32> {
    Image::new(8, 8, (0..64).map(|k| k as f32 / 64.0).collect()).unwrap()
}

#[test]
fn augmentation_examples() {
    let img = gradient_image();
    let ranges = PhotometricRanges::default();
    let a = augment_eval(&Constant(0.5), &img, &ranges, 3).unwrap();
    assert_eq!(a.variants.len(), AUGMENT_VARIANTS);
    assert_eq!(a.mean, 0.5);

    let identity = PhotometricRanges {
        gain: (1.0, 1.0),
        bias: (0.0, 0.0),
    };
    let raw = MeanPixel.score(&img).unwrap();
    let b = augment_eval(&MeanPixel, &img, &identity, 3).unwrap();
    assert!(b.variants.iter().all(|v| v.score == raw));
    assert_eq!(b.mean, raw);

    let noisy = Noisy(Mutex::new(ChaCha8Rng::seed_from_u64(1)));
    let c = augment_eval(&noisy, &img, &ranges, 9).unwrap();
    assert_eq!(c.variants.len(), 7);
    assert_eq!(c.mean, mean_score(c.variants.iter().map(|v| v.score)));
    for v in &c.variants {
        assert!((0.7..=1.3).contains(&v.gain) && (-0.15..=0.15).contains(&v.bias));
    }
    // same seed, same photometric draws
    let d = augment_eval(&MeanPixel, &img, &ranges, 9).unwrap();
    let e = augment_eval(&MeanPixel, &img, &ranges, 9).unwrap();
    assert_eq!(d, e);
    assert_eq!(d.variants.iter().map(|v| v.gain).collect::<Vec<_>>(), c.variants.iter().map(|v| v.gain).collect::<Vec<_>>());
}

#[test]
fn pairing_oracle() {
    let subjects = ["a", "a", "b", "c", "c", "c", "b"];
    let p = make_pairs(&subjects, 1000, 4).unwrap();
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for (a, sa) in subjects.iter().enumerate() {
        for (b, sb) in subjects.iter().enumerate() {
            if a != b && sa == sb {
                genuine.push((a, b));
            } else if sa != sb {
                impostor.push((a, b));
            }
        }
    }
    assert_eq!(p.genuine, genuine);
    assert_eq!(p.impostor, impostor);

    let capped = make_pairs(&subjects, 10, 4).unwrap();
    assert_eq!(capped.impostor.len(), 10);
    assert!(capped.impostor.windows(2).all(|w| w[0] < w[1]));
    assert!(capped.impostor.iter().all(|q| impostor.contains(q)));
    assert_eq!(capped, make_pairs(&subjects, 10, 4).unwrap());
    assert_ne!(capped.impostor, make_pairs(&subjects, 10, 5).unwrap().impostor);

    let err = make_pairs(&["a", "b"], 10, 0).unwrap_err();
    assert!(matches!(err, Error::Eval(_)));
}

#[test]
fn similarity_of_self_is_one() {
    let v = [0.3, -1.2, 4.0];
    assert!((similarity(&v, &v) - 1.0).abs() < 1e-12);
    assert_eq!(similarity(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
}

struct Fixture {
    _dir: tempfile::TempDir,
    model: EnsembleModel<f32>,
    train: Vec<LabeledImage<f32>>,
    test: Vec<LabeledImage<f32>>,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        height: 16,
        width: 16,
        subjects_per_group: 3,
        images_per_subject: 3,
        test_subjects_per_group: 1,
        ..SyntheticSpec::default()
    };
    let m = generate(&spec, &dir.path().join("data")).unwrap();
    let cfg = TrainConfig {
        arch: ArchConfig::tiny(16, 16),
        epochs: 1,
        classifier: FitConfig {
            epochs: 2,
            ..FitConfig::default()
        },
        matcher: FitConfig {
            epochs: 2,
            ..FitConfig::default()
        },
        ..TrainConfig::default()
    };
    let model = train_ensemble(&m, &EnsembleSpec::new(Scheme::E1, 3, 2), &cfg, &dir.path().join("model")).unwrap();
    let train = load_images(&m, Some(Partition::Train), 16, 16).unwrap();
    let test = load_images(&m, Some(Partition::Test), 16, 16).unwrap();
    Fixture {
        _dir: dir,
        model,
        train,
        test,
    }
}

fn registry(f: &Fixture) -> Registry {
    let cfg = RegistryConfig {
        predictors: vec!["pixel-logistic".into(), "cnn-shifted-aug-eval".into()],
        matchers: vec!["pixel-cosine".into()],
        fit: FitConfig {
            epochs: 1,
            ..FitConfig::default()
        },
        ..RegistryConfig::default()
    };
    let mut reg = build_registry(&f.train, &f.model.members[0].meta.arch, &cfg).unwrap();
    add_auxiliary(&mut reg, &f.model);
    reg
}

fn settings() -> ScoringSettings {
    ScoringSettings {
        seed: 21,
        augmentation: PhotometricRanges::default(),
        impostor_cap: 10_000,
    }
}

fn datasets(f: &Fixture) -> Vec<EvalDataset> {
    vec![EvalDataset {
        name: "synthetic-test".into(),
        images: f.test.clone(),
    }]
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn end_to_end_report() {
    let f = fixture();
    let reg = registry(&f);
    let out = tempfile::tempdir().unwrap();
    let report = evaluate(&f.model, &reg, datasets(&f), &settings(), false, out.path()).unwrap();
    let ds = &report.datasets[0];
    assert!(ds.failures.is_empty(), "{:?}", ds.failures);
    assert_eq!(ds.images, f.test.len());

    // every predictor has original, 3 members, best and random
    for p in &report.header.predictors {
        for m in ["original", "0", "1", "2", "best", "random"] {
            assert!(ds.gender_entry(p, m).is_some(), "{p}/{m}");
        }
        let d = ds.dominance.iter().find(|d| &d.predictor == p).unwrap();
        assert!(d.holds && d.best_auc <= d.min_member_auc);
    }
    for m in &report.header.matchers {
        for member in ["original", "0", "1", "2", "random"] {
            assert!(ds.matching_entry(m, member).is_some());
        }
    }
    for e in ds.gender.iter().chain(&ds.matching) {
        assert!(out.path().join(&e.curve).is_file());
    }
    assert!(out.path().join("synthetic-test/plots/gender_aux-0.png").is_file());

    // every number comes back from the dumps alone
    assert_eq!(rebuild_report(out.path()).unwrap(), report);

    // augmented averages recompute from the per-variant dump
    let dir = out.path().join("synthetic-test");
    let rows = read_scores(&dir.join(GENDER_SCORES)).unwrap();
    let variants = read_variants(&dir.join(AUGMENT_VARIANTS_FILE)).unwrap();
    let aug: Vec<&ScoreRow> = rows
        .iter()
        .filter(|r| r.predictor == "cnn-shifted-aug-eval" && r.san_member != "best" && r.san_member != "random")
        .collect();
    assert_eq!(variants.len(), aug.len() * AUGMENT_VARIANTS);
    for r in aug {
        let v: Vec<f64> = variants
            .iter()
            .filter(|v| v.image_id == r.image_id && v.san_member == r.san_member && v.predictor == r.predictor)
            .map(|v| v.score)
            .collect();
        assert_eq!(v.len(), 7);
        assert_eq!(mean_score(v), r.score);
    }

    // best rows equal an independent selection over the member rows
    for img in &f.test {
        let member: Vec<f64> = (0..3)
            .map(|i| {
                rows.iter()
                    .find(|r| r.predictor == "pixel-logistic" && r.san_member == i.to_string() && r.image_id == img.id)
                    .unwrap()
                    .score
            })
            .collect();
        let best = rows
            .iter()
            .find(|r| r.predictor == "pixel-logistic" && r.san_member == "best" && r.image_id == img.id)
            .unwrap();
        assert_eq!(best.score, select_best(&member, img.labels.gender).unwrap().1);
    }

    // diversity from the dump agrees with scoring the classifiers directly
    let classifiers: Vec<_> = f.model.members.iter().map(|m| &m.classifier).collect();
    let (direct, _) = error_report(&classifiers, &f.test).unwrap();
    let div = ds.diversity.as_ref().unwrap();
    assert_eq!(div.member_errors, direct.member_errors);
    assert_eq!(div.entropy, direct.entropy);
    assert!(div.reference.is_some());

    // the report is published against a schema
    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let instance: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join(REPORT_FILE)).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");

    // a rerun writes the same bytes
    let again = tempfile::tempdir().unwrap();
    evaluate(&f.model, &reg, datasets(&f), &settings(), false, again.path()).unwrap();
    assert_eq!(tree_bytes(out.path()), tree_bytes(again.path()));

    // identity perturbation reproduces every baseline exactly
    let id = tempfile::tempdir().unwrap();
    let report = evaluate(&f.model, &reg, datasets(&f), &settings(), true, id.path()).unwrap();
    let ds = &report.datasets[0];
    for e in ds.gender.iter().chain(&ds.matching) {
        let base = if ds.gender.contains(e) {
            ds.gender_entry(&e.name, "original")
        } else {
            ds.matching_entry(&e.name, "original")
        }
        .unwrap();
        assert_eq!((e.auc, e.eer), (base.auc, base.eer), "{}/{}", e.name, e.san_member);
        let a = fs::read_to_string(id.path().join(&e.curve)).unwrap();
        assert_eq!(a, fs::read_to_string(id.path().join(&base.curve)).unwrap());
    }

    // a singleton ensemble's best selection is its only member
    let single = EnsembleModel {
        record: f.model.record.clone(),
        members: vec![f.model.members[0].clone()],
        matcher: f.model.matcher.clone(),
    };
    let one = tempfile::tempdir().unwrap();
    let report = evaluate(&single, &reg, datasets(&f), &settings(), false, one.path()).unwrap();
    let ds = &report.datasets[0];
    for p in ["pixel-logistic", "aux-0"] {
        let (b, m) = (ds.gender_entry(p, "best").unwrap(), ds.gender_entry(p, "0").unwrap());
        assert_eq!((b.auc, b.eer), (m.auc, m.eer));
    }
}

struct Broken;
impl GenderPredictor for Broken {
    fn name(&self) -> &str {
        "broken"
    }
    fn score(&self, _: &Image<f32>) -> Result<f64> {
        Ok(1.5)
    }
}

#[test]
fn failing_predictor_is_isolated() {
    let f = fixture();
    let mut reg = Registry::default();
    reg.add_predictor(Arc::new(Broken), false);
    reg.add_predictor(Arc::new(MeanPixel), true);
    reg.add_matcher(Arc::new(PixelMatcher {
        name: "pixel-cosine".into(),
        grid: 4,
    }));
    let out = tempfile::tempdir().unwrap();
    let report = evaluate(&f.model, &reg, datasets(&f), &settings(), false, out.path()).unwrap();
    let ds = &report.datasets[0];
    assert_eq!(ds.failures.len(), 1);
    assert_eq!(ds.failures[0].name, "broken");
    assert!(ds.gender_entry("mean-pixel", "best").is_some());
    assert!(ds.gender_entry("broken", "original").is_none());
}
