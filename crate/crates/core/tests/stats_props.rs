use credit_divergence::stats::{
    normal_cdf, normal_quantile, normal_sf, student_t_cdf, summarize, welch_test, StatsError,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn quantile_inverts_cdf(p in 1e-12..(1.0 - 1e-12)) {
        let x = normal_quantile(p).unwrap();
        prop_assert!((normal_cdf(x) - p).abs() <= 1e-13 * p.max(1e-3));
    }

    #[test]
    fn tails_sum_to_one(x in -30.0..30.0f64) {
        prop_assert!((normal_cdf(x) + normal_sf(x) - 1.0).abs() < 1e-15);
        prop_assert_eq!(normal_sf(x), normal_cdf(-x));
    }

    #[test]
    fn t_cdf_is_odd_and_monotone(x in -20.0..20.0f64, dx in 0.001..1.0f64, dof in 1.0..200.0f64) {
        let a = student_t_cdf(x, dof).unwrap();
        prop_assert!((a + student_t_cdf(-x, dof).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!(student_t_cdf(x + dx, dof).unwrap() >= a);
    }

    #[test]
    fn welch_is_antisymmetric_and_shift_invariant(
        a in prop::collection::vec(-10.0..10.0f64, 3..30),
        b in prop::collection::vec(-10.0..10.0f64, 3..30),
        shift in -5.0..5.0f64,
    ) {
        let ab = welch_test(&a, &b);
        prop_assume!(ab.is_ok());
        let ab = ab.unwrap();
        let ba = welch_test(&b, &a).unwrap();
        prop_assert!((ab.t_stat + ba.t_stat).abs() < 1e-12);
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
        let sa: Vec<f64> = a.iter().map(|x| x + shift).collect();
        let sb: Vec<f64> = b.iter().map(|x| x + shift).collect();
        let shifted = welch_test(&sa, &sb).unwrap();
        prop_assert!((shifted.t_stat - ab.t_stat).abs() < 1e-8 * ab.t_stat.abs().max(1.0));
    }
}

#[test]
fn hand_computed_welch() {
    let r = welch_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    assert!((r.t_stat + 1.0).abs() < 1e-12);
    assert!((r.dof - 8.0).abs() < 1e-12);
    // Two-sided p for t = -1 on 8 dof.
    assert!((r.p_value - 0.346_593_507_087_9).abs() < 1e-9);
    let same = welch_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
    assert_eq!(same.p_value, 1.0);
}

#[test]
fn summaries_and_errors() {
    let s = summarize(&[2.0, 4.0, 6.0]).unwrap();
    assert_eq!((s.n, s.mean, s.sd), (3, 4.0, 2.0));
    assert!(matches!(summarize(&[1.0]), Err(StatsError::InsufficientData { .. })));
    assert_eq!(normal_quantile(0.0).unwrap(), f64::NEG_INFINITY);
    assert!(normal_quantile(1.5).is_err());
    assert!((student_t_cdf(1.5, 1e6).unwrap() - normal_cdf(1.5)).abs() < 1e-3);
}
