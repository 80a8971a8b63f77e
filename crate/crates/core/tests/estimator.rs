mod common;

use std::sync::Arc;

use common::{bernoulli_constant, bernoulli_skewed, bernoulli_truth, radius, skewed_propensity};
use driftrobust::bench::{simulate, RingsPolicy};
use driftrobust::estimator::{
    estimate_aipw_value, estimate_frozen_grid, estimate_policy_value, estimate_policy_value_with_covariate_shift,
    PropensitySource, RatioSource, RegressionSource,
};
use driftrobust::policy::{ConstantPolicy, FnPolicy};
use driftrobust::EstimatorConfig;

#[test]
fn bernoulli_constant_matches_the_oracle() {
    let data = bernoulli_constant(20_000, 1);
    let r = estimate_policy_value(&data, &ConstantPolicy(0), radius(0.1), &EstimatorConfig::default()).unwrap();
    assert!((r.estimate - bernoulli_truth(0.1)).abs() <= 0.02, "{}", r.estimate);
    assert_eq!(r.estimate, -(r.per_fold.iter().sum::<f64>() / r.per_fold.len() as f64));
}

#[test]
fn zero_radius_recovers_aipw() {
    let data = bernoulli_constant(10_000, 2);
    let cfg = EstimatorConfig::default();
    let policy = FnPolicy(|x: &[f64]| usize::from(x[1] > 0.5));
    let robust = estimate_policy_value(&data, &policy, radius(0.0), &cfg).unwrap();
    let aipw = estimate_aipw_value(&data, &policy, &cfg).unwrap();
    assert!((robust.estimate - aipw.estimate).abs() <= 1e-2, "{} vs {}", robust.estimate, aipw.estimate);
}

#[test]
fn frozen_grid_is_non_increasing() {
    let data = simulate(3000, 3).unwrap().dataset();
    let grid: Vec<_> = [0.0, 0.05, 0.1, 0.2, 0.4].into_iter().map(radius).collect();
    let reports = estimate_frozen_grid(&data, &RingsPolicy, radius(0.1), &grid, &EstimatorConfig::default()).unwrap();
    for w in reports.windows(2) {
        assert!(w[1].estimate <= w[0].estimate, "{} then {}", w[0].estimate, w[1].estimate);
    }
}

#[test]
fn true_propensity_with_zero_regression_is_unbiased() {
    let data = bernoulli_skewed(20_000, 4);
    let cfg = EstimatorConfig {
        propensity: skewed_propensity(),
        regression: RegressionSource::Zero,
        ..EstimatorConfig::default()
    };
    let r = estimate_policy_value(&data, &ConstantPolicy(1), radius(0.1), &cfg).unwrap();
    assert!((r.estimate - bernoulli_truth(0.1)).abs() <= 2.0 * r.std_error, "{} ± {}", r.estimate, r.std_error);
}

#[test]
fn fitted_regression_survives_a_wrong_propensity() {
    let data = bernoulli_skewed(20_000, 5);
    let cfg = EstimatorConfig {
        propensity: PropensitySource::uniform(2),
        ..EstimatorConfig::default()
    };
    let r = estimate_policy_value(&data, &ConstantPolicy(0), radius(0.1), &cfg).unwrap();
    assert!((r.estimate - bernoulli_truth(0.1)).abs() <= 2.0 * r.std_error, "{} ± {}", r.estimate, r.std_error);
}

#[test]
fn repeated_runs_are_bit_identical() {
    let data = simulate(1500, 6).unwrap().dataset();
    let cfg = EstimatorConfig {
        seed: 9,
        ..EstimatorConfig::default()
    };
    let a = estimate_policy_value(&data, &RingsPolicy, radius(0.1), &cfg).unwrap();
    let b = estimate_policy_value(&data, &RingsPolicy, radius(0.1), &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn identity_covariate_shift_matches_the_plain_estimate() {
    let data = simulate(4000, 7).unwrap().dataset();
    let target = simulate(4000, 8).unwrap().dataset();
    let cfg = EstimatorConfig::default();
    let plain = estimate_policy_value(&data, &RingsPolicy, radius(0.1), &cfg).unwrap();
    let known = RatioSource::Known(Arc::new(|_: &[f64]| 1.0));
    let shifted =
        estimate_policy_value_with_covariate_shift(&data, target.covariates(), &known, &RingsPolicy, radius(0.1), &cfg)
            .unwrap();
    let joint = (plain.std_error.powi(2) + shifted.std_error.powi(2)).sqrt();
    assert!((plain.estimate - shifted.estimate).abs() <= 2.0 * joint, "{} vs {}", plain.estimate, shifted.estimate);
    let fitted = estimate_policy_value_with_covariate_shift(
        &data,
        target.covariates(),
        &RatioSource::Classifier,
        &RingsPolicy,
        radius(0.1),
        &cfg,
    )
    .unwrap();
    assert!((fitted.estimate - shifted.estimate).abs() <= 2.0 * joint);
}
