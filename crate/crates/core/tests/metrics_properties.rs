use proptest::prelude::*;

use lod_consensus::metrics::{calibrate_threshold, relative_convergence_rate};
use lod_consensus::{empirical_roc, iterations_to_within, ConvergenceTrace};

/// Mann–Whitney pair count: P(s1 > s0) + ½·P(s1 = s0).
fn pair_count_auc(h0: &[f64], h1: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &a in h1 {
        for &b in h0 {
            if a > b {
                wins += 1.0;
            } else if a == b {
                wins += 0.5;
            }
        }
    }
    wins / (h0.len() * h1.len()) as f64
}

// Small integer grid so ties are common.
fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0i32..40).prop_map(f64::from), 1..60)
}

fn trace_from(values: Vec<Vec<f64>>) -> ConvergenceTrace {
    let n = values[0].len();
    ConvergenceTrace {
        states: values,
        honest_mask: vec![true; n],
    }
}

proptest! {
    #[test]
    fn auc_equals_pair_count(h0 in scores(), h1 in scores()) {
        let roc = empirical_roc(&h0, &h1).unwrap();
        prop_assert!((roc.auc - pair_count_auc(&h0, &h1)).abs() < 1e-12);
    }

    #[test]
    fn roc_is_a_monotone_staircase(h0 in scores(), h1 in scores()) {
        let roc = empirical_roc(&h0, &h1).unwrap();
        let first = roc.points[0];
        let last = *roc.points.last().unwrap();
        prop_assert_eq!((first.pfa, first.pd), (0.0, 0.0));
        prop_assert_eq!((last.pfa, last.pd), (1.0, 1.0));
        for w in roc.points.windows(2) {
            prop_assert!(w[1].pfa >= w[0].pfa && w[1].pd >= w[0].pd);
        }
    }

    #[test]
    fn auc_survives_increasing_transforms(h0 in scores(), h1 in scores()) {
        // exact in f64 for these small integers
        let t = |v: &Vec<f64>| v.iter().map(|x| x * x * x + 2.0 * x - 7.0).collect::<Vec<_>>();
        let a = empirical_roc(&h0, &h1).unwrap().auc;
        let b = empirical_roc(&t(&h0), &t(&h1)).unwrap().auc;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn threshold_is_monotone_in_level(
        h0 in prop::collection::vec(-10.0f64..10.0, 1..200),
        d1 in 0.001f64..0.999,
        d2 in 0.001f64..0.999,
    ) {
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        prop_assume!(lo < hi);
        let t_lo = calibrate_threshold(&h0, lo).unwrap();
        let t_hi = calibrate_threshold(&h0, hi).unwrap();
        prop_assert!(t_lo >= t_hi);
        let exceed = h0.iter().filter(|&&s| s > t_lo).count() as f64;
        prop_assert!(exceed / h0.len() as f64 <= lo + 1e-12);
    }

    #[test]
    fn tighter_band_never_converges_sooner(
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..40),
        target in -2.0f64..2.0,
        f1 in 0.5f64..0.999,
        f2 in 0.5f64..0.999,
    ) {
        let (loose, tight) = if f1 < f2 { (f1, f2) } else { (f2, f1) };
        let trace = trace_from(rows);
        let a = iterations_to_within(&trace, target, loose, 1e-3);
        let b = iterations_to_within(&trace, target, tight, 1e-3);
        match (a, b) {
            (_, None) => {}
            (Some(a), Some(b)) => prop_assert!(b >= a),
            (None, Some(_)) => prop_assert!(false, "tight band converged, loose did not"),
        }
    }
}

#[test]
fn threshold_reference_cases() {
    let scores: Vec<f64> = (1..=100).map(f64::from).collect();
    assert_eq!(calibrate_threshold(&scores, 0.05).unwrap(), 95.0);
    assert_eq!(calibrate_threshold(&scores, 0.5).unwrap(), 50.0);
    assert!(calibrate_threshold(&[], 0.1).is_err());
    assert!(calibrate_threshold(&scores, 0.0).is_err());
}

#[test]
fn separated_and_identical_scores() {
    assert_eq!(empirical_roc(&[0.0, 1.0], &[2.0, 3.0]).unwrap().auc, 1.0);
    assert_eq!(empirical_roc(&[2.0, 3.0], &[0.0, 1.0]).unwrap().auc, 0.0);
    assert_eq!(empirical_roc(&[1.0; 5], &[1.0; 7]).unwrap().auc, 0.5);
}

#[test]
fn t_star_requires_staying_in_the_band() {
    // enters at 1, leaves at 2, re-enters for good at 3
    let trace = trace_from(vec![
        vec![0.0, 0.0],
        vec![0.99, 1.0],
        vec![1.2, 1.0],
        vec![1.01, 0.98],
        vec![1.0, 1.0],
    ]);
    assert_eq!(iterations_to_within(&trace, 1.0, 0.95, 1e-3), Some(3));
    assert_eq!(relative_convergence_rate(Some(3), 2), Some(1.5));
    assert_eq!(relative_convergence_rate(None, 2), None);
}

#[test]
fn zero_target_uses_absolute_band() {
    let trace = trace_from(vec![vec![0.1], vec![5e-4], vec![-2e-4]]);
    assert_eq!(iterations_to_within(&trace, 0.0, 0.95, 1e-3), Some(1));
}
