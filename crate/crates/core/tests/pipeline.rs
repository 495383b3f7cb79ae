mod common;

use common::*;
use pitchcon::corpus::{fix_length, load_dataset, normalize_speaker, save_dataset, FRAMES};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn normalisation_spans_unit_interval(seed in any::<u64>()) {
        prop_assert_eq!(check_normalization(seed), Ok(()));
    }

    #[test]
    fn folds_are_balanced(seed in any::<u64>(), per_class in 1usize..12, k in 2usize..7) {
        prop_assert_eq!(check_folds(&small_synth(seed, per_class), k, seed), Ok(()));
    }

    #[test]
    fn augmentations_are_deterministic_and_bounded(seed in any::<u64>()) {
        let d = normalize_speaker(&small_synth(seed, 1)).unwrap();
        prop_assert_eq!(check_augmentations(&d, seed), Ok(()));
    }

    #[test]
    fn duplicated_batches_always_have_positives(seed in any::<u64>()) {
        let d = normalize_speaker(&small_synth(seed, 1)).unwrap();
        prop_assert_eq!(check_duplication(&d, seed), Ok(()));
    }

    #[test]
    fn framing_keeps_exact_length(len in 1usize..500, seed in any::<u64>()) {
        let mut r = rng(seed);
        use rand::Rng;
        let vals: Vec<f64> = (0..len).map(|_| r.random_range(50.0..400.0)).collect();
        let mask: Vec<bool> = (0..len).map(|_| r.random_range(0.0..1.0) > 0.3).collect();
        let c = fix_length(&vals, &mask, FRAMES).unwrap();
        prop_assert_eq!(c.len(), FRAMES);
        if len <= FRAMES {
            prop_assert_eq!(&c.mask()[..len], &mask[..]);
            prop_assert!(c.mask()[len..].iter().all(|&m| !m));
        }
        prop_assert!(c.values().iter().zip(c.mask()).all(|(&v, &m)| m || v == 0.0));
    }

    #[test]
    fn metrics_match_brute_force(seed in any::<u64>()) {
        prop_assert_eq!(check_metrics(seed), Ok(()));
    }
}

#[test]
fn synthetic_corpus_is_reproducible_and_round_trips() {
    let a = small_synth(5, 2);
    assert_eq!(a, small_synth(5, 2));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    save_dataset(&a, &path, Some("abc")).unwrap();
    let b = load_dataset(&path).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert_eq!(x.label, y.label);
        assert_eq!(x.speaker_id, y.speaker_id);
        assert_eq!(x.contour.mask(), y.contour.mask());
        for (u, v) in x.contour.values().iter().zip(y.contour.values()) {
            assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0));
        }
    }
}
