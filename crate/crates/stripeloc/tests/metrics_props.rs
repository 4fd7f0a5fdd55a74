use proptest::prelude::*;
use stripeloc::harness::metrics::{ecdf, ecdf_at, iqr_clean, quantile_sorted, rmse, rmse_clean};

fn lower_fence(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.75));
    q1 - 1.5 * (q3 - q1)
}

proptest! {
    #[test]
    fn cleaning_lowers_rmse_when_only_large_errors_are_trimmed(v in prop::collection::vec(0.0..10.0f64, 2..60), outliers in prop::collection::vec(1e2..1e4f64, 0..4)) {
        let mut e = v.clone();
        e.extend(outliers);
        // Absolute errors can only be trimmed from above when the lower fence is non-positive.
        prop_assume!(lower_fence(&e) <= 0.0);
        prop_assert!(rmse_clean(&e) <= rmse(&e) * (1.0 + 1e-12));
    }

    #[test]
    fn cleaning_a_progression_is_a_noop(a in -5.0..5.0f64, d in 1e-3..2.0f64, n in 2usize..40, rot in 0usize..40) {
        let mut v: Vec<f64> = (0..n).map(|i| a + d * i as f64).collect();
        v.rotate_left(rot % n);
        prop_assert_eq!(iqr_clean(&v), v);
    }

    #[test]
    fn cleaned_samples_are_a_subsequence(v in prop::collection::vec(-1e3..1e3f64, 1..50)) {
        let c = iqr_clean(&v);
        let mut it = v.iter();
        prop_assert!(c.iter().all(|x| it.any(|y| y == x)));
    }

    #[test]
    fn ecdf_is_monotone_from_zero_to_one(v in prop::collection::vec(-1e3..1e3f64, 1..50)) {
        let e = ecdf(&v);
        prop_assert!(e.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
        prop_assert_eq!(e.last().unwrap().1, 1.0);
        let (lo, hi) = (e[0].0, e.last().unwrap().0);
        prop_assert_eq!(ecdf_at(&v, hi), 1.0);
        prop_assert_eq!(ecdf_at(&v, lo - 1.0), 0.0);
    }
}

#[test]
fn cleaning_can_raise_rmse_when_a_small_error_is_trimmed() {
    let e = [0.0, 10.0, 10.0, 10.0, 10.0];
    assert_eq!(iqr_clean(&e), vec![10.0; 4]);
    assert!(rmse_clean(&e) > rmse(&e));
}
