use ensan::labels::Gender;
use ensan::nn::seeded_rng;
use ensan::selection::{select_best, select_random};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn best_matches_scan_oracle() {
    let mut rng = seeded_rng(42);
    for case in 0..1000 {
        let t = rng.random_range(1..8);
        // coarse grid so ties occur
        let scores: Vec<f64> = (0..t).map(|_| f64::from(rng.random_range(0..5u8)) / 4.0).collect();
        let gender = if case % 2 == 0 { Gender::Male } else { Gender::Female };
        let (idx, val) = select_best(&scores, gender).unwrap();
        let target = match gender {
            Gender::Male => scores.iter().copied().fold(f64::INFINITY, f64::min),
            Gender::Female => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        assert_eq!(val, target);
        assert_eq!(idx, scores.iter().position(|&s| s == target).unwrap());
    }
}

#[test]
fn random_selection_is_uniform() {
    let mut counts = [0usize; 5];
    for i in 0..10_000 {
        counts[select_random(5, 7, &format!("img_{i}.png")).unwrap()] += 1;
    }
    for c in counts {
        let f = c as f64 / 10_000.0;
        assert!((f - 0.2).abs() <= 0.012, "{counts:?}");
    }
}

proptest! {
    #[test]
    fn best_is_invariant_under_increasing_transforms(
        scores in prop::collection::vec(0.0f64..=1.0, 1..10),
        male in any::<bool>(),
    ) {
        let g = if male { Gender::Male } else { Gender::Female };
        let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + 1.0).collect();
        prop_assert_eq!(select_best(&scores, g).unwrap().0, select_best(&transformed, g).unwrap().0);
    }

    #[test]
    fn best_dominates_every_member(
        scores in prop::collection::vec(0.0f64..=1.0, 1..10),
        male in any::<bool>(),
    ) {
        let g = if male { Gender::Male } else { Gender::Female };
        let (_, v) = select_best(&scores, g).unwrap();
        for s in scores {
            let ok = if male { v <= s } else { v >= s };
            prop_assert!(ok);
        }
    }
}
