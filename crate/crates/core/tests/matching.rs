use mixeval::matching::{
    common_support_mask, estimate_att, match_weights, Arm, ControlPool, KernelKind, MatchSpec,
};
use mixeval::synthetic::brute_force_att;
use proptest::prelude::*;

#[test]
fn kernel_weights_by_hand() {
    // treated at 0.50; controls at 0.47 (u = 0.5) and 0.53 (u = 0.5) and
    // 0.60 (outside the 0.06 bandwidth)
    let treated = Arm::new(vec![0.50], vec![1.0]);
    let control = Arm::new(vec![0.47, 0.53, 0.60], vec![0.0, 1.0, 1.0]);
    let est = estimate_att(&treated, &control, &MatchSpec::kernel()).unwrap();
    assert!((est.coeff - 0.5).abs() < 1e-12);
    assert_eq!(KernelKind::Epanechnikov.weight(0.5), 0.75 * 0.75);
    assert_eq!(KernelKind::Epanechnikov.weight(1.0), 0.0);
}

#[test]
fn nearest_neighbours_include_ties() {
    let treated = Arm::new(vec![0.5], vec![1.0]);
    // distances 1/8, 1/8, 1/4, 1/4, 3/8 (exact in binary): the third-nearest
    // distance is shared by two controls, so four controls contribute
    let control = Arm::new(
        vec![0.375, 0.625, 0.25, 0.75, 0.875],
        vec![0.0, 0.0, 1.0, 0.0, 1.0],
    );
    let est = estimate_att(&treated, &control, &MatchSpec::nearest_neighbour(3)).unwrap();
    assert!((est.coeff - 0.75).abs() < 1e-12);
    let pool = ControlPool::new(&control.scores, &control.outcomes);
    assert_eq!(
        pool.weights(0.5, &MatchSpec::nearest_neighbour(3))
            .unwrap()
            .len(),
        4
    );
}

#[test]
fn radius_leaves_isolated_treated_unmatched() {
    let treated = Arm::new(vec![0.2, 0.8], vec![1.0, 1.0]);
    let control = Arm::new(vec![0.17, 0.85, 0.5], vec![0.0, 1.0, 0.0]);
    let est = estimate_att(&treated, &control, &MatchSpec::radius(0.04)).unwrap();
    assert_eq!(est.n_treated_unmatched, 1);
    assert!((est.coeff - 1.0).abs() < 1e-12);
    assert!(estimate_att(&treated, &control, &MatchSpec::radius(0.02)).is_err());
    let est = estimate_att(&treated, &control, &MatchSpec::radius(0.06)).unwrap();
    assert_eq!(est.n_matched(), 2);
    assert!((est.coeff - 0.5).abs() < 1e-12);
}

#[test]
fn off_support_treated_are_dropped() {
    let treated = Arm::new(vec![0.05, 0.5, 0.95], vec![1.0, 1.0, 1.0]);
    let control = Arm::new(vec![0.1, 0.5, 0.9], vec![0.0, 0.0, 0.0]);
    assert_eq!(
        common_support_mask(&treated.scores, &control.scores).unwrap(),
        vec![false, true, false]
    );
    let est = estimate_att(&treated, &control, &MatchSpec::nearest_neighbour(1)).unwrap();
    assert_eq!(est.n_treated_dropped, 2);
    assert_eq!(est.n_treated_on_support, 1);
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(MatchSpec {
        bandwidth: 0.0,
        ..MatchSpec::kernel()
    }
    .validate()
    .is_err());
    assert!(MatchSpec::nearest_neighbour(0).validate().is_err());
    assert!(MatchSpec::radius(-0.1).validate().is_err());
}

fn arb_arm(max: usize) -> impl Strategy<Value = Arm> {
    prop::collection::vec((0.01f64..0.99, any::<bool>()), 1..max).prop_map(|v| {
        let (s, y): (Vec<f64>, Vec<bool>) = v.into_iter().unzip();
        Arm::new(s, y.into_iter().map(|b| f64::from(u8::from(b))).collect())
    })
}

fn arb_spec() -> impl Strategy<Value = MatchSpec> {
    prop_oneof![
        (0.02f64..0.3).prop_map(|h| MatchSpec {
            bandwidth: h,
            ..MatchSpec::kernel()
        }),
        (1usize..5).prop_map(MatchSpec::nearest_neighbour),
        (0.02f64..0.3).prop_map(MatchSpec::radius),
    ]
}

proptest! {
    #[test]
    fn agrees_with_the_brute_force_oracle(t in arb_arm(15), c in arb_arm(15), spec in arb_spec()) {
        match (estimate_att(&t, &c, &spec), brute_force_att(&t, &c, &spec)) {
            (Ok(e), Ok(o)) => prop_assert!((e.coeff - o).abs() < 1e-12),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "module {:?} vs oracle {:?}", a.map(|e| e.coeff), b),
        }
    }

    #[test]
    fn binary_outcomes_bound_the_att(t in arb_arm(20), c in arb_arm(20), spec in arb_spec()) {
        if let Ok(e) = estimate_att(&t, &c, &spec) {
            prop_assert!((-1.0..=1.0).contains(&e.coeff));
            prop_assert_eq!(e.n_treated, t.len());
            prop_assert_eq!(e.n_treated_dropped + e.n_treated_on_support, t.len());
        }
    }

    #[test]
    fn common_shift_cancels(t in arb_arm(20), c in arb_arm(20), spec in arb_spec(), shift in -5.0f64..5.0) {
        let moved = |a: &Arm| Arm::new(a.scores.clone(), a.outcomes.iter().map(|y| y + shift).collect());
        if let (Ok(a), Ok(b)) = (estimate_att(&t, &c, &spec), estimate_att(&moved(&t), &moved(&c), &spec)) {
            prop_assert!((a.coeff - b.coeff).abs() < 1e-9);
        }
    }

    #[test]
    fn control_weights_sum_to_one(t in arb_arm(20), c in arb_arm(20), spec in arb_spec()) {
        if let Ok(w) = match_weights(&t, &c, &spec) {
            if w.treated_matched.iter().any(|m| *m) {
                prop_assert!((w.control_weight.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(w.control_weight.iter().all(|x| *x >= 0.0));
            }
        }
    }
}
