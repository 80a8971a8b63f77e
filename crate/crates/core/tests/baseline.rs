mod common;

use common::radius;
use driftrobust::baseline::joint_dro_value;
use driftrobust::bench::{sim_behavior, simulate, RingsPolicy};
use driftrobust::estimator::estimate_policy_value;
use driftrobust::{EstimatorConfig, Policy};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn joint_value_is_bounded_and_monotone(
        pairs in prop::collection::vec((0.0f64..1.0, 0.01f64..5.0), 1..30),
        d1 in 0.0f64..1.0,
        d2 in 0.0f64..1.0,
    ) {
        let (ys, w): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (lo, hi) = (d1.min(d2), d1.max(d2));
        let a = joint_dro_value(&ys, &w, radius(lo)).unwrap().value;
        let b = joint_dro_value(&ys, &w, radius(hi)).unwrap().value;
        let min = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = ys.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / w.iter().sum::<f64>();
        prop_assert!(b <= a + 1e-9);
        prop_assert!(a <= mean + 1e-9);
        prop_assert!(b >= min - 2e-3 * hi - 1e-9);
    }
}

#[test]
fn joint_ball_is_more_pessimistic_than_the_conditional_ball() {
    let data = simulate(20_000, 41).unwrap().dataset();
    let d = radius(0.1);
    let (mut ys, mut w) = (Vec::new(), Vec::new());
    for i in 0..data.len() {
        let a = RingsPolicy.action(data.row(i));
        if a == data.action(i) {
            ys.push(data.reward(i));
            w.push(1.0 / sim_behavior(data.row(i))[a]);
        }
    }
    let joint = joint_dro_value(&ys, &w, d).unwrap().value;
    let r = estimate_policy_value(&data, &RingsPolicy, d, &EstimatorConfig::default()).unwrap();
    assert!(joint <= r.estimate + 2.0 * r.std_error, "joint {joint} vs {} ± {}", r.estimate, r.std_error);
}
