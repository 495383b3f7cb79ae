mod common;

use common::*;
use pitchcon::nn::Graph;
use pitchcon::objectives::{supcon_aug, supcon_clean, ObjectiveKind};
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_losses_match_double_loops(seed in any::<u64>()) {
        let c = projection_case(seed);
        let lib = library_projection_losses(&c);
        let naive = naive_projection_losses(&c);
        for (a, b) in lib.iter().zip(&naive) {
            prop_assert!(close(*a, *b, 1e-10), "{lib:?} vs {naive:?}");
        }
    }

    #[test]
    fn losses_ignore_row_order(seed in any::<u64>(), shift in 1usize..16) {
        let c = projection_case(seed);
        let n = c.labels.len();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + shift) % n).collect();
        let mut seen = vec![false; n];
        for &p in &perm { seen[p] = true; }
        prop_assume!(seen.iter().all(|&s| s));
        let permuted = ProjectionCase {
            clean: perm.iter().map(|&i| c.clean[i].clone()).collect(),
            aug: perm.iter().map(|&i| c.aug[i].clone()).collect(),
            labels: perm.iter().map(|&i| c.labels[i]).collect(),
            tau: c.tau,
        };
        let a = library_projection_losses(&c);
        let b = library_projection_losses(&permuted);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(close(*x, *y, 1e-10));
        }
    }

    #[test]
    fn rescaled_rows_with_rescaled_temperature_agree(seed in any::<u64>(), scale in 0.3f64..3.0) {
        let c = projection_case(seed);
        let scaled = ProjectionCase {
            clean: c.clean.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect(),
            aug: c.aug.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect(),
            labels: c.labels.clone(),
            tau: c.tau * scale * scale,
        };
        let a = library_projection_losses(&c);
        let b = library_projection_losses(&scaled);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(close(*x, *y, 1e-10));
        }
    }

    #[test]
    fn identical_views_give_equal_clean_and_augmented_losses(seed in any::<u64>()) {
        let c = projection_case(seed);
        let mut g = Graph::<f64>::new();
        let zc = constant_rows(&mut g, &c.clean);
        let za = constant_rows(&mut g, &c.clean);
        let lc = supcon_clean(&mut g, zc, &c.labels, c.tau).unwrap();
        let la = supcon_aug(&mut g, za, zc, &c.labels, c.tau).unwrap();
        prop_assert_eq!(g.value(lc).data()[0], g.value(la).data()[0]);
    }
}

#[test]
fn every_objective_matches_loop_level_forward_pass() {
    for (i, kind) in ObjectiveKind::ALL.iter().cycle().take(40).enumerate() {
        let case = small_case(77 + i as u64, *kind);
        let lib = library_objective(&case.params, &case.batch, &case.spec);
        let naive = naive_objective(&case.params, &case.batch, &case.spec);
        assert!(close(lib, naive, 1e-10), "{kind}: {lib} vs {naive}");
    }
}

#[test]
fn two_identical_same_class_rows_have_zero_loss() {
    let mut g = Graph::<f64>::new();
    let z = constant_rows(&mut g, &[vec![0.6, 0.8], vec![0.6, 0.8]]);
    let l = supcon_clean(&mut g, z, &[3, 3], 0.1).unwrap();
    assert!(g.value(l).data()[0].abs() < 1e-9);
}

#[test]
fn identity_augmentation_makes_both_terms_equal() {
    for (seed, dup) in [(1, false), (2, true), (3, true)] {
        let (clean, aug, total) = identity_batch_losses(seed, dup);
        assert_eq!(clean, aug, "duplication {dup}");
        assert_eq!(total, 2.0 * clean);
    }
}
