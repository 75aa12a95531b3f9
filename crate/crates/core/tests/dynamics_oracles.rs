mod support;

use std::f64::consts::PI;

use gradstop_core::dynamics::{auc, cohesion, divergence, select_by_norm};
use gradstop_core::{GradientSet, GradientVector, Rng, TieMode, Vec64};
use proptest::prelude::*;
use support::{brute_force_select, pairwise_auc};

fn set_of(rows: &[Vec<f64>]) -> GradientSet {
    GradientSet::from_vectors(rows.iter().map(|r| Vec64::new(r.clone()).unwrap()).collect()).unwrap()
}

fn random_rows(rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = 1 + rng.below(12);
    let dim = 1 + rng.below(8);
    (0..n).map(|_| (0..dim).map(|_| rng.normal() * 3.0).collect()).collect()
}

fn scaled(rows: &[Vec<f64>], a: f64) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r.iter().map(|v| v * a).collect()).collect()
}

#[test]
fn cohesion_and_divergence_invariants_on_random_sets() {
    let mut rng = Rng::new(21);
    for _ in 0..1000 {
        let rows = random_rows(&mut rng);
        let g = set_of(&rows);
        let c = cohesion(&g);
        assert!((0.0..=1.0).contains(&c));

        let a = rng.uniform(1e-3, 1e3);
        let cs = cohesion(&set_of(&scaled(&rows, a)));
        assert!((c - cs).abs() < 1e-12, "{c} vs {cs}");

        let mut shuffled = rows.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.below(i + 1));
        }
        assert!((c - cohesion(&set_of(&shuffled))).abs() < 1e-12);

        // parallel copies are perfectly cohesive; a set plus its negation cancels
        let base = &rows[0];
        let copies: Vec<Vec<f64>> = (1..4).map(|m| base.iter().map(|v| v * m as f64).collect()).collect();
        assert!((cohesion(&set_of(&copies)) - 1.0).abs() < 1e-12);
        let mut cancel = rows.clone();
        cancel.extend(scaled(&rows, -1.0));
        assert!(cohesion(&set_of(&cancel)) < 1e-12);

        let other = set_of(&random_rows_dim(&mut rng, base.len()));
        let same = set_of(&rows);
        if let Ok(d) = divergence(&same, &other) {
            assert!((0.0..=PI).contains(&d));
            let d_sym = divergence(&other, &same).unwrap();
            assert!((d - d_sym).abs() < 1e-12);
            let d_scaled = divergence(&set_of(&scaled(&rows, a)), &other).unwrap();
            assert!((d - d_scaled).abs() < 1e-12);
            assert!(divergence(&same, &same).unwrap() < 1e-12);
            let anti = divergence(&same, &set_of(&scaled(&rows, -1.0))).unwrap();
            assert!((anti - PI).abs() < 1e-12);
        }
    }
}

fn random_rows_dim(rng: &mut Rng, dim: usize) -> Vec<Vec<f64>> {
    let n = 1 + rng.below(12);
    (0..n).map(|_| (0..dim).map(|_| rng.normal()).collect()).collect()
}

#[test]
fn cohesion_is_one_only_for_positive_multiples() {
    let mut rng = Rng::new(22);
    for _ in 0..200 {
        let dim = 2 + rng.below(6);
        let dir: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let mut rows: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                let m = rng.uniform(0.1, 5.0);
                dir.iter().map(|v| v * m).collect()
            })
            .collect();
        rows.push(vec![0.0; dim]);
        let c = cohesion(&set_of(&rows));
        assert!((c - 1.0).abs() < 1e-12, "{c} {rows:?}");
        // bending one member off the common direction breaks it
        rows[0][0] += 0.5;
        rows[0][1] -= 0.5;
        assert!(cohesion(&set_of(&rows)) < 1.0 - 1e-9);
    }
    let zero = set_of(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
    assert_eq!(cohesion(&zero), 0.0);
}

#[test]
fn select_by_norm_matches_brute_force() {
    let mut rng = Rng::new(23);
    for case in 0..1000 {
        let n = if case % 10 == 0 { 400 } else { 2 + rng.below(60) };
        let k = 1 + rng.below(n / 2);
        // coarse values on some cases so the tie rule is exercised
        let norms: Vec<f64> = (0..n)
            .map(|_| if case % 3 == 0 { rng.below(5) as f64 } else { rng.uniform(0.0, 10.0) })
            .collect();
        let (top, last) = select_by_norm(&norms, k).unwrap();
        let (bt, bl) = brute_force_select(&norms, k);
        let sorted = |mut v: Vec<usize>| {
            v.sort();
            v
        };
        assert_eq!(sorted(top), sorted(bt), "case {case}");
        assert_eq!(sorted(last), sorted(bl), "case {case}");
    }
}

#[test]
fn select_by_norm_rejects_bad_k() {
    assert!(select_by_norm(&[1.0, 2.0, 3.0], 0).is_err());
    assert!(select_by_norm(&[1.0, 2.0, 3.0], 2).is_err());
}

#[test]
fn auc_matches_pairwise_oracle_in_both_tie_modes() {
    let mut rng = Rng::new(24);
    for case in 0..50 {
        let n = 2 + rng.below(300);
        let mut labels: Vec<u8> = (0..n).map(|_| (rng.uniform(0.0, 1.0) < 0.2) as u8).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = (0..n)
            .map(|_| if case % 2 == 0 { rng.below(8) as f64 } else { rng.normal() })
            .collect();
        for (mode, tie) in [(TieMode::Strict, 0.0), (TieMode::Half, 0.5)] {
            let fast = auc(&scores, &labels, mode).unwrap();
            assert_eq!(fast, pairwise_auc(&scores, &labels, tie), "case {case} {mode:?}");
        }
    }
}

#[test]
fn auc_reversal_identity_without_ties() {
    let mut rng = Rng::new(25);
    for _ in 0..50 {
        let n = 20 + rng.below(200);
        let mut labels: Vec<u8> = (0..n).map(|_| (rng.below(4) == 0) as u8).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let a = auc(&scores, &labels, TieMode::Strict).unwrap();
        let b = auc(&neg, &labels, TieMode::Strict).unwrap();
        assert!((a + b - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn cohesion_scale_and_order_free(
        rows in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 3), 1..10),
        scale in 1e-6f64..1e6,
    ) {
        let c = cohesion(&set_of(&rows));
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert!((c - cohesion(&set_of(&scaled(&rows, scale)))).abs() < 1e-10);
        let mut rev = rows.clone();
        rev.reverse();
        prop_assert!((c - cohesion(&set_of(&rev))).abs() < 1e-12);
    }

    #[test]
    fn auc_is_a_rank_statistic(
        pairs in prop::collection::vec((-50.0f64..50.0, any::<bool>()), 2..80),
    ) {
        let mut labels: Vec<u8> = pairs.iter().map(|p| p.1 as u8).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let warped: Vec<f64> = scores.iter().map(|s| (s / 10.0).exp() * 3.0 + 1.0).collect();
        for mode in [TieMode::Strict, TieMode::Half] {
            let a = auc(&scores, &labels, mode).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert_eq!(a, auc(&warped, &labels, mode).unwrap());
        }
    }

    #[test]
    fn divergence_in_range(
        u in prop::collection::vec(-10.0f64..10.0, 4),
        v in prop::collection::vec(-10.0f64..10.0, 4),
    ) {
        let g1 = GradientSet::from_vectors(vec![GradientVector::new(u).unwrap()]).unwrap();
        let g2 = GradientSet::from_vectors(vec![GradientVector::new(v).unwrap()]).unwrap();
        if let Ok(d) = divergence(&g1, &g2) {
            prop_assert!((0.0..=PI).contains(&d));
        }
    }
}
