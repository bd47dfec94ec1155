use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use ensan::labels::{AttributeGroup, Gender, Partition};
use ensan::manifest::DatasetManifest;
use ensan::prototype::compute_prototypes;
use ensan::synth::*;

fn spec(noise: f64, subjects: usize, images: usize) -> SyntheticSpec {
    SyntheticSpec {
        height: 32,
        width: 32,
        subjects_per_group: subjects,
        images_per_subject: images,
        noise,
        seed: 11,
        ..SyntheticSpec::default()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn noiseless_gender_probe_is_perfect() {
    let s = spec(0.0, 1, 1);
    let items = render(&s).unwrap();
    assert_eq!(items.len(), 8);
    let p = gender_pattern(32, 32);
    let scores: Vec<(f64, Gender)> = items.iter().map(|it| (dot(it.image.pixels(), &p), it.record.gender)).collect();
    let mean = |g| {
        let v: Vec<f64> = scores.iter().filter(|s| s.1 == g).map(|s| s.0).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let threshold = 0.5 * (mean(Gender::Male) + mean(Gender::Female));
    for (score, g) in scores {
        assert_eq!(score > threshold, g == Gender::Male);
    }
}

#[test]
fn latent_signs_match_labels() {
    let s = spec(0.0, 2, 1);
    let template = face_template(32, 32);
    let centers = [(0.72, 0.5), (0.28, 0.27), (0.28, 0.73)];
    for it in render(&s).unwrap() {
        let resid: Vec<f64> = it.image.pixels().iter().zip(&template).map(|(x, t)| x - t).collect();
        let signs: Vec<bool> = centers
            .iter()
            .map(|&c| dot(&resid, &attribute_pattern(32, 32, c)) > 0.0)
            .collect();
        let l = it.record.labels();
        assert_eq!(signs[0], l.gender == Gender::Male, "{}", it.record.path);
        assert_eq!(signs[1], l.age == ensan::labels::Age::Old);
        assert_eq!(signs[2], l.race == ensan::labels::Race::White);
    }
}

#[test]
fn generation_is_byte_deterministic_and_round_trips() {
    let s = spec(0.05, 2, 2);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = generate(&s, a.path()).unwrap();
    let mb = generate(&s, b.path()).unwrap();
    assert_eq!(ma.records, mb.records);
    for r in &ma.records {
        assert_eq!(fs::read(ma.resolve(r)).unwrap(), fs::read(mb.resolve(r)).unwrap());
    }
    let loaded = DatasetManifest::load(&a.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(loaded, ma);
    assert_eq!(load_spec(&a.path().join(SPEC_FILE)).unwrap(), s);
    loaded.check_images_exist().unwrap();
}

#[test]
fn group_counts_and_subject_disjoint_split() {
    let s = spec(0.03, 4, 3);
    let items = render(&s).unwrap();
    assert_eq!(items.len(), s.image_count());
    let mut per_group: BTreeMap<AttributeGroup, usize> = BTreeMap::new();
    let mut parts: BTreeMap<String, BTreeSet<Partition>> = BTreeMap::new();
    for it in &items {
        *per_group.entry(it.record.group()).or_default() += 1;
        parts.entry(it.record.subject_id.clone()).or_default().insert(it.record.partition);
    }
    assert_eq!(per_group.len(), 8);
    assert!(per_group.values().all(|&n| n == 12));
    assert!(parts.values().all(|p| p.len() == 1));
    let test_subjects = parts.values().filter(|p| p.contains(&Partition::Test)).count();
    assert_eq!(test_subjects, 8);

    // a single subject per group is never moved to test
    let one = render(&spec(0.0, 1, 2)).unwrap();
    assert!(one.iter().all(|it| it.record.partition == Partition::Train));
}

#[test]
fn pgm_output_loads_back() {
    let s = SyntheticSpec {
        format: ImageFormat::Pgm,
        ..spec(0.02, 1, 1)
    };
    let dir = tempfile::tempdir().unwrap();
    let m = generate(&s, dir.path()).unwrap();
    assert!(m.records[0].path.ends_with(".pgm"));
    let img = ensan::image::Image::<f32>::load(&m.resolve(&m.records[0])).unwrap();
    assert_eq!(img.dims(), (32, 32));
}

#[test]
fn prototypes_match_brute_force_means() {
    // 80 images, 10 per group
    let s = SyntheticSpec {
        test_subjects_per_group: 0,
        ..spec(0.05, 2, 5)
    };
    let dir = tempfile::tempdir().unwrap();
    let m = generate(&s, dir.path()).unwrap();
    assert_eq!(m.len(), 80);
    let protos = compute_prototypes::<f64>(&m, Partition::Train, 32, 32).unwrap();
    for group in AttributeGroup::all() {
        let mut sum = vec![0.0f64; 32 * 32];
        let mut n = 0;
        for r in m.records.iter().filter(|r| r.group() == group) {
            let raw = image::open(m.resolve(r)).unwrap().to_luma8();
            for (acc, p) in sum.iter_mut().zip(raw.as_raw()) {
                *acc += f64::from(*p) / 255.0;
            }
            n += 1;
        }
        assert_eq!(n, 10);
        for (a, b) in sum.iter().zip(protos.get(group).pixels()) {
            assert!((a / n as f64 - b).abs() < 1e-6);
        }
    }
}
