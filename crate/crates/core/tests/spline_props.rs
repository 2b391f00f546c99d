mod common;

use common::{clamped_knots, naive_basis};
use depthprior::spline::{basis_eval, threshold_at, BasisSpec, CurveEvaluator};
use depthprior::ThresholdCurve;
use proptest::prelude::*;

#[test]
fn endpoints_and_bernstein() {
    let s = BasisSpec::new(10, (0.0, 0.9)).unwrap();
    let first = basis_eval(&s, 0.0);
    assert_eq!(first[0], 1.0);
    assert!(first[1..].iter().all(|&b| b == 0.0));
    let last = basis_eval(&s, 0.9);
    assert_eq!(last[9], 1.0);
    assert!(last[..9].iter().all(|&b| b == 0.0));

    let s4 = BasisSpec::new(4, (0.0, 1.0)).unwrap();
    let b = basis_eval(&s4, 0.5);
    for (got, want) in b.iter().zip([0.125, 0.375, 0.375, 0.125]) {
        assert!((got - want).abs() <= 1e-12);
    }
    assert!(BasisSpec::new(3, (0.0, 1.0)).is_err());
    assert!(BasisSpec::new(5, (0.5, 0.5)).is_err());
}

#[test]
fn knot_vector_shape() {
    let s = BasisSpec::new(10, (0.0, 0.9)).unwrap();
    let want = clamped_knots(10, 0.0, 0.9);
    assert_eq!(s.knots().len(), 14);
    for (a, b) in s.knots().iter().zip(&want) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn threshold_examples() {
    let flat = ThresholdCurve::flat(0.6, (0.0, 0.9), 10, 0.1);
    assert!((0..=20).all(|k| threshold_at(&flat, k as f64 / 20.0) == 0.6));
    let c = ThresholdCurve {
        psi: vec![0.15; 10],
        ..flat.clone()
    };
    assert!((0..=20).all(|k| (threshold_at(&c, k as f64 / 20.0) - 0.45).abs() <= 1e-12));
    let end = ThresholdCurve {
        tau0: 0.7,
        knot_domain: (0.0, 0.9),
        psi: vec![0.0, 0.0, 0.0, 0.2],
        rho: 0.1,
    };
    assert!((threshold_at(&end, 0.9) - 0.5).abs() <= 1e-12);
    // Depths beyond the domain use the endpoint value.
    assert_eq!(threshold_at(&end, 1.0), threshold_at(&end, 0.9));
    // Clipping to [0, 1].
    let big = ThresholdCurve {
        tau0: 0.2,
        knot_domain: (0.0, 0.9),
        psi: vec![0.5; 4],
        rho: 0.1,
    };
    assert_eq!(threshold_at(&big, 0.3), 0.0);
    assert!(CurveEvaluator::new(&big).unwrap().raw_threshold(0.3) < 0.0);
}

proptest! {
    #[test]
    fn basis_matches_cox_de_boor(j in 4usize..=16, u in 0.0f64..=1.0) {
        let (lo, hi) = (0.0, 0.9);
        let d = lo + u * (hi - lo);
        let s = BasisSpec::new(j, (lo, hi)).unwrap();
        let knots = clamped_knots(j, lo, hi);
        let b = basis_eval(&s, d);
        for (m, &v) in b.iter().enumerate() {
            prop_assert!((v - naive_basis(&knots, m, 3, d)).abs() <= 1e-12, "m={m} d={d}");
        }
    }

    #[test]
    fn partition_nonneg_local_support(j in 4usize..=16, d in -0.5f64..1.5) {
        let s = BasisSpec::new(j, (0.0, 0.9)).unwrap();
        let b = basis_eval(&s, d);
        prop_assert!((b.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(b.iter().all(|&v| v >= 0.0));
        prop_assert!(b.iter().filter(|&&v| v != 0.0).count() <= 4);
    }

    #[test]
    fn raising_a_coefficient_never_raises_the_curve(
        psi in prop::collection::vec(0.0f64..0.3, 10),
        m in 0usize..10,
        bump in 0.0f64..0.2,
        d in 0.0f64..1.0,
    ) {
        let c = ThresholdCurve { tau0: 0.8, knot_domain: (0.0, 0.9), psi: psi.clone(), rho: 0.1 };
        let mut psi2 = psi;
        psi2[m] += bump;
        let c2 = ThresholdCurve { psi: psi2, ..c.clone() };
        prop_assert!(threshold_at(&c2, d) <= threshold_at(&c, d) + 1e-15);
    }

    #[test]
    fn constant_coefficients_collapse(j in 4usize..=16, c in 0.0f64..0.5, d in 0.0f64..1.0) {
        let curve = ThresholdCurve { tau0: 0.9, knot_domain: (0.0, 0.9), psi: vec![c; j], rho: 0.1 };
        prop_assert!((threshold_at(&curve, d) - (0.9 - c)).abs() <= 1e-12);
    }
}
