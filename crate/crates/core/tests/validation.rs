use beacon_core::validation::{ks_statistic, ks_test, DEFAULT_SIGNIFICANCE};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// sup |F_a - F_b| evaluated at every pooled sample point
fn brute_ks(a: &[f64], b: &[f64]) -> f64 {
    let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    a.iter().chain(b).map(|&x| (ecdf(a, x) - ecdf(b, x)).abs()).fold(0.0, f64::max)
}

#[test]
fn statistic_matches_brute_force_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..50 {
        let n = rng.gen_range(2..40);
        let m = rng.gen_range(2..40);
        // coarse values so ties across and within samples are common
        let a: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() * 10.0).round() / 2.0).collect();
        let b: Vec<f64> = (0..m).map(|_| (rng.gen::<f64>() * 12.0).round() / 2.0 - 0.5).collect();
        assert_eq!(ks_statistic(&a, &b), brute_ks(&a, &b), "case {case}");
    }
}

#[test]
fn small_matrices_accept_equal_laws() {
    let row = [0.31, 0.42, 0.47, 0.52];
    let sim = [0.30, 0.44, 0.49, 0.50];
    let r = ks_test(&row, &sim, DEFAULT_SIGNIFICANCE).unwrap();
    assert_eq!(r.decision, 0);
    let far =
        ks_test(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[10.0, 11.0, 12.0, 13.0, 14.0, 15.0], DEFAULT_SIGNIFICANCE).unwrap();
    assert_eq!(far.statistic, 1.0);
    assert_eq!(far.decision, 1);
}

proptest! {
    #[test]
    fn statistic_is_symmetric_and_bounded(
        a in prop::collection::vec(-5.0f64..5.0, 1..30),
        b in prop::collection::vec(-5.0f64..5.0, 1..30),
    ) {
        let d = ks_statistic(&a, &b);
        prop_assert_eq!(d, ks_statistic(&b, &a));
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(ks_statistic(&a, &a), 0.0);
        prop_assert_eq!(d, brute_ks(&a, &b));
    }
}
