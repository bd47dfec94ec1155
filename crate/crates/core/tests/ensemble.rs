use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ensan::ensemble::*;
use ensan::error::Error;
use ensan::labels::{Age, Gender, Partition, Race};
use ensan::manifest::{DatasetManifest, Record};
use ensan::nn::seeded_rng;
use ensan::sanmodel::{ArchConfig, FitConfig};
use ensan::synth::{generate, SyntheticSpec};
use proptest::prelude::*;
use rand::Rng;

/// `subjects` subjects with `per_subject` training images each; the first
/// `black_subjects` are labeled black.
fn manifest(subjects: usize, per_subject: usize, black_subjects: usize) -> DatasetManifest {
    let mut records = Vec::new();
    for s in 0..subjects {
        for k in 0..per_subject {
            records.push(Record {
                path: format!("s{s:03}_{k}.png"),
                subject_id: format!("s{s:03}"),
                gender: if s % 2 == 0 { Gender::Male } else { Gender::Female },
                age: Age::Young,
                race: if s < black_subjects { Race::Black } else { Race::White },
                partition: Partition::Train,
                race_override: None,
            });
        }
    }
    DatasetManifest::new("/nonexistent", records).unwrap()
}

#[test]
fn e2_sizes_and_disjoint_subjects() {
    let m = manifest(20, 5, 0);
    let spec = EnsembleSpec::new(Scheme::E2, 5, 3);
    let mut seen: Vec<BTreeSet<String>> = Vec::new();
    for i in 0..5 {
        let r = resample_e2(&m, i, &spec).unwrap();
        let n_i = r.summary.selected_images;
        assert_eq!(n_i, 10);
        assert_eq!(r.manifest.len(), 100 + 4 * n_i);
        // every selected image appears 1 + 4 times
        for rec in m.records.iter().filter(|x| r.summary.selected_subjects.contains(&x.subject_id)) {
            assert_eq!(r.manifest.records.iter().filter(|x| x.path == rec.path).count(), 5);
        }
        seen.push(r.summary.selected_subjects.into_iter().collect());
    }
    for i in 0..5 {
        for j in 0..5 {
            if i != j {
                assert!(seen[i].is_disjoint(&seen[j]));
            }
        }
    }
    assert_eq!(resample_e2(&m, 2, &spec).unwrap(), resample_e2(&m, 2, &spec).unwrap());
}

#[test]
fn e2_uneven_subjects_stay_under_the_fraction() {
    let mut records = manifest(30, 1, 0).records;
    for k in 0..7 {
        let mut r = records[0].clone();
        r.path = format!("extra_{k}.png");
        records.push(r);
    }
    let m = DatasetManifest::new("/x", records).unwrap();
    let spec = EnsembleSpec::new(Scheme::E2, 3, 8);
    for i in 0..3 {
        let r = resample_e2(&m, i, &spec).unwrap();
        assert!(r.summary.selected_images as f64 <= 0.1 * m.len() as f64);
        assert!(r.summary.selected_images >= 1);
    }
}

#[test]
fn e2_factor_zero_and_infeasible() {
    let m = manifest(20, 5, 0);
    let mut spec = EnsembleSpec::new(Scheme::E2, 2, 1);
    spec.subject_duplication = 0;
    assert_eq!(resample_e2(&m, 0, &spec).unwrap().manifest, m);
    let too_many = EnsembleSpec::new(Scheme::E2, 11, 1);
    assert!(matches!(resample_e2(&m, 0, &too_many), Err(Error::Resample(_))));
    // one subject already exceeds 10% of the images
    let big = manifest(5, 5, 0);
    assert!(resample_e2(&big, 0, &EnsembleSpec::new(Scheme::E2, 1, 1)).is_err());
}

#[test]
fn e3_arithmetic_and_degenerate_cases() {
    // 200 training images, 50 of them black
    let m = manifest(40, 5, 10);
    let spec = EnsembleSpec::new(Scheme::E3, 5, 0);
    let r = resample_e3(&m, &spec, 7).unwrap();
    assert_eq!(r.summary.selected_images, 5);
    assert_eq!(r.manifest.len(), 400);
    let added = &r.manifest.records[200..];
    assert!(added.iter().all(|x| x.race == Race::Black));

    let few = manifest(10, 1, 5);
    let r = resample_e3(&few, &spec, 7).unwrap();
    assert_eq!(r.summary.appended, 0);
    assert_eq!(r.manifest, few);

    assert!(matches!(resample_e3(&manifest(4, 2, 0), &spec, 1), Err(Error::Resample(_))));
}

#[test]
fn e3_subsets_vary_with_seed() {
    let m = manifest(40, 5, 10);
    let spec = EnsembleSpec::new(Scheme::E3, 5, 0);
    let first = resample_e3(&m, &spec, 0).unwrap().manifest;
    let differs = (1..=20).any(|s| resample_e3(&m, &spec, s).unwrap().manifest != first);
    assert!(differs);
}

#[test]
fn e3_member_manifests_all_grow_by_the_same_amount() {
    let m = manifest(40, 5, 10);
    let spec = EnsembleSpec::new(Scheme::E3, 5, 12);
    for i in 0..5 {
        let (mm, _) = member_manifest(&m, &spec, i).unwrap();
        assert_eq!(mm.len(), m.len() + 40 * 5);
    }
}

#[test]
fn spec_validation() {
    let mut s = EnsembleSpec::new(Scheme::E1, 3, 0);
    s.validate().unwrap();
    s.seeds[1] = s.seeds[0];
    assert!(s.validate().is_err());
    let mut s = EnsembleSpec::new(Scheme::E1, 3, 0);
    s.race_fraction = 0.0;
    assert!(s.validate().is_err());
    assert!(EnsembleSpec::new(Scheme::E1, 0, 0).validate().is_err());
    assert_eq!("e3".parse::<Scheme>().unwrap(), Scheme::E3);
}

fn oracle(m: &[Vec<bool>]) -> f64 {
    let t = m.len();
    let n = m[0].len();
    let mut total = 0.0;
    for k in 0..n {
        let mut l = 0;
        for row in m {
            if row[k] {
                l += 1;
            }
        }
        let denom = t as f64 - (t as f64 / 2.0).ceil();
        total += (l.min(t - l)) as f64 / denom;
    }
    total / n as f64
}

#[test]
fn entropy_examples_and_oracle() {
    assert_eq!(entropy_diversity(&vec![vec![true; 10]; 5]).unwrap(), 0.0);
    let two_of_five: Vec<Vec<bool>> = (0..5).map(|i| vec![i < 2; 7]).collect();
    assert_eq!(entropy_diversity(&two_of_five).unwrap(), 1.0);
    assert!(entropy_diversity(&[vec![true]]).is_err());
    let mut rng = seeded_rng(4);
    let m: Vec<Vec<bool>> = (0..5).map(|_| (0..100).map(|_| rng.random_bool(0.7)).collect()).collect();
    assert!((entropy_diversity(&m).unwrap() - oracle(&m)).abs() < 1e-12);
}

proptest! {
    #[test]
    fn entropy_is_permutation_invariant(
        bits in prop::collection::vec(prop::collection::vec(any::<bool>(), 12), 2..7),
        shift in 0usize..12,
    ) {
        let e = entropy_diversity(&bits).unwrap();
        prop_assert!((0.0..=1.0).contains(&e));
        let mut members = bits.clone();
        members.reverse();
        prop_assert!((entropy_diversity(&members).unwrap() - e).abs() < 1e-12);
        let rotated: Vec<Vec<bool>> = bits.iter().map(|r| { let mut r = r.clone(); r.rotate_left(shift); r }).collect();
        prop_assert!((entropy_diversity(&rotated).unwrap() - e).abs() < 1e-12);
        let same = vec![bits[0].clone(); bits.len()];
        prop_assert_eq!(entropy_diversity(&same).unwrap(), 0.0);
    }
}

#[test]
fn constant_members_report() {
    let genders: Vec<Gender> = (0..10).map(|i| if i % 2 == 0 { Gender::Male } else { Gender::Female }).collect();
    let r = report_from_scores(&vec![vec![0.9; 10]; 3], &genders).unwrap();
    assert_eq!(r.member_errors, vec![0.5; 3]);
    assert_eq!(r.mean_error, 0.5);
    assert_eq!(r.entropy, Some(0.0));
    assert_eq!(reference_figures(Scheme::E3).mean_error_percent[1], 5.55);
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        arch: ArchConfig::tiny(16, 16),
        epochs: 1,
        classifier: FitConfig {
            epochs: 1,
            ..FitConfig::default()
        },
        matcher: FitConfig {
            epochs: 1,
            ..FitConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn synthetic(dir: &Path) -> DatasetManifest {
    let spec = SyntheticSpec {
        height: 16,
        width: 16,
        subjects_per_group: 2,
        images_per_subject: 4,
        test_subjects_per_group: 0,
        ..SyntheticSpec::default()
    };
    generate(&spec, dir).unwrap()
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
fn e1_training_is_deterministic_and_resumable() {
    let data = tempfile::tempdir().unwrap();
    let m = synthetic(data.path());
    assert_eq!(m.len(), 64);
    let spec = EnsembleSpec::new(Scheme::E1, 2, 5);
    let cfg = tiny_config();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let model = train_ensemble(&m, &spec, &cfg, a.path()).unwrap();
    assert_eq!(model.len(), 2);
    assert_ne!(model.members[0].meta.seed, model.members[1].meta.seed);
    assert!(a.path().join("E1/san_0/meta.json").is_file());
    assert!(a.path().join("E1/san_1/autoencoder.bin").is_file());

    // interrupted after member 0: the second member's directory is incomplete
    train_ensemble(&m, &spec, &cfg, b.path()).unwrap();
    fs::remove_file(b.path().join("E1/san_1/meta.json")).unwrap();
    fs::remove_file(b.path().join(ENSEMBLE_FILE)).unwrap();
    train_ensemble(&m, &spec, &cfg, b.path()).unwrap();
    assert_eq!(tree_bytes(a.path()), tree_bytes(b.path()));

    let loaded = EnsembleModel::<f32>::load(a.path()).unwrap();
    assert_eq!(loaded.record, model.record);
    let img = &model.members[0].prototypes;
    let x = img.iter().next().unwrap().1.clone();
    let labels = img.iter().next().unwrap().0.labels();
    assert_eq!(loaded.perturb(&x, labels).unwrap(), model.perturb(&x, labels).unwrap());

    // a different seed may not silently reuse the old checkpoints
    let other = EnsembleSpec::new(Scheme::E1, 2, 6);
    let err = train_ensemble(&m, &other, &cfg, a.path()).unwrap_err();
    assert!(matches!(err, Error::Member { member: 0, .. }), "{err}");
}

#[test]
fn infeasible_resampling_fails_before_training() {
    let data = tempfile::tempdir().unwrap();
    let m = synthetic(data.path());
    // 16 subjects of 4 images: one subject per member fits under 10%, so
    // the 17th member has none left
    let spec = EnsembleSpec::new(Scheme::E2, 17, 5);
    let out = tempfile::tempdir().unwrap();
    let err = train_ensemble(&m, &spec, &tiny_config(), out.path()).unwrap_err();
    assert!(matches!(err, Error::Resample(_)), "{err}");
    assert!(err.to_string().contains("member 16"), "{err}");
    assert!(!out.path().join("E2").exists());
}
