use loadmon::metrics::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn table() -> impl Strategy<Value = ContingencyTable> {
    (0u64..5000, 0u64..5000, 0u64..5000, 0u64..5000)
        .prop_filter("non-empty", |(a, b, c, d)| a + b + c + d > 0)
        .prop_map(|(tp, fn_, fp, tn)| ContingencyTable::new(tp, fn_, fp, tn))
}

#[test]
fn mcc_squared_is_informedness_times_markedness() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    for _ in 0..1000 {
        let max = 10u64.pow(rng.random_range(1..7));
        let t = ContingencyTable::new(
            rng.random_range(0..max),
            rng.random_range(0..max),
            rng.random_range(0..max),
            rng.random_range(0..max),
        );
        let r = compute_report(t);
        if let (Some(mcc), Some(b), Some(m)) = (r.mcc, r.informedness, r.markedness) {
            assert!((mcc * mcc - b * m).abs() <= 1e-12, "{t:?}");
            checked += 1;
        }
    }
    assert!(checked > 900);
}

#[test]
fn hand_counted_table() {
    let truth = [true, true, true, false, false, false, false, false, false, false];
    let pred = [true, true, false, true, false, false, false, false, false, false];
    let t = tabulate_states(&pred, &truth).unwrap();
    assert_eq!(t, ContingencyTable::new(2, 1, 1, 6));
    let r = compute_report(t);
    assert!((r.tpa.unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!((r.tnr.unwrap() - 6.0 / 7.0).abs() < 1e-15);
    assert!((r.informedness.unwrap() - 11.0 / 21.0).abs() < 1e-15);
    assert!((r.f1.unwrap() - 2.0 / 3.0).abs() < 1e-15);
    let (num, den) = t.mcc_parts();
    assert_eq!((num * num) as u128 * 441, 121 * den);
}

#[test]
fn always_on_bias_at_low_prevalence() {
    let a = trivial_classifier_audit(0.01, 10_000).unwrap();
    let f1 = a.always_positive.f1.unwrap();
    assert!((f1 - 2.0 * 0.99 / (2.0 * 0.99 + 0.01)).abs() < 1e-12);
    assert_eq!(a.always_positive.informedness, Some(0.0));
    let a = trivial_classifier_audit(0.99, 10_000).unwrap();
    assert!((a.always_negative.accuracy.unwrap() - 0.99).abs() <= 1e-12);
    assert_eq!(a.always_negative.informedness, Some(0.0));
    assert_eq!(a.always_negative.mcc, None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn swapping_labels(t in table()) {
        let a = compute_report(t);
        let b = compute_report(t.swapped());
        prop_assert_eq!(a.tpa, b.tna);
        prop_assert_eq!(a.tpr, b.tnr);
        prop_assert_eq!(a.tna, b.tpa);
        prop_assert_eq!(a.accuracy, b.accuracy);
        for (x, y) in [(a.informedness, b.informedness), (a.markedness, b.markedness), (a.mcc, b.mcc)] {
            match (x, y) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn constant_predictors_have_zero_informedness(rp in 1u64..10_000, rn in 1u64..10_000) {
        let on = compute_report(ContingencyTable::new(rp, 0, rn, 0));
        let off = compute_report(ContingencyTable::new(0, rp, 0, rn));
        prop_assert_eq!(on.informedness, Some(0.0));
        prop_assert_eq!(off.informedness, Some(0.0));
    }

    #[test]
    fn metrics_are_scale_invariant(t in table(), k in 1u64..1000) {
        let a = compute_report(t);
        let b = compute_report(t.scaled(k));
        let pairs = [
            (a.accuracy, b.accuracy), (a.tpa, b.tpa), (a.tpr, b.tpr), (a.tna, b.tna), (a.tnr, b.tnr),
            (a.f1, b.f1), (a.informedness, b.informedness), (a.markedness, b.markedness),
            (a.mcc, b.mcc), (a.rn, b.rn),
        ];
        for (x, y) in pairs {
            match (x, y) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn f1_is_harmonic_mean(t in table()) {
        let r = compute_report(t);
        if let (Some(p), Some(q)) = (r.tpa, r.tpr) {
            if p + q > 0.0 {
                prop_assert!((r.f1.unwrap() - 2.0 * p * q / (p + q)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn defined_metrics_stay_in_range(t in table()) {
        let r = compute_report(t);
        for v in [r.accuracy, r.tpa, r.tpr, r.tna, r.tnr, r.f1, r.rn].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        for v in [r.informedness, r.markedness, r.mcc].into_iter().flatten() {
            prop_assert!((-1.0..=1.0).contains(&v));
        }
    }
}
