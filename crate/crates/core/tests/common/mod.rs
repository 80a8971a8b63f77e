#![allow(dead_code)]

use driftrobust::dual::{bernoulli_worst_mean, RadiusDelta};
use driftrobust::estimator::{KnownPropensity, PropensitySource};
use driftrobust::rng;
use driftrobust::Dataset;
use rand::Rng as _;
use std::sync::Arc;

pub fn radius(d: f64) -> RadiusDelta<f64> {
    RadiusDelta::new(d).unwrap()
}

/// `g_δ(1/2)` for the Bernoulli-constant design.
pub fn bernoulli_truth(delta: f64) -> f64 {
    bernoulli_worst_mean(0.5, radius(delta)).unwrap()
}

/// Probability of action 0 under the skewed logging policy.
pub fn skewed_p0(x: &[f64]) -> f64 {
    0.2 + 0.6 * x[0]
}

fn draw(n: usize, seed: u64, p0: impl Fn(&[f64]) -> f64) -> Dataset {
    let mut r = rng::rng(seed);
    let mut x = Vec::with_capacity(2 * n);
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row = [r.random::<f64>(), r.random::<f64>()];
        a.push(usize::from(r.random::<f64>() >= p0(&row)));
        y.push(if r.random::<bool>() { 1.0 } else { 0.0 });
        x.extend_from_slice(&row);
    }
    Dataset::new(2, 2, x, a, y).unwrap()
}

/// Two covariates on the unit square, two actions logged uniformly, every
/// potential outcome `Bern(1/2)` independent of everything else.
pub fn bernoulli_constant(n: usize, seed: u64) -> Dataset {
    draw(n, seed, |_| 0.5)
}

/// The same outcome law logged by a covariate-dependent policy.
pub fn bernoulli_skewed(n: usize, seed: u64) -> Dataset {
    draw(n, seed, skewed_p0)
}

pub fn skewed_propensity() -> PropensitySource {
    PropensitySource::Known(KnownPropensity(Arc::new(|x, a| {
        let p = skewed_p0(x);
        if a == 0 {
            p
        } else {
            1.0 - p
        }
    })))
}

/// Replications whose nominal 95% interval covers `g_δ(1/2)` on the
/// Bernoulli-constant design.
pub fn coverage_count(reps: u64, n: usize, delta: f64) -> u64 {
    use driftrobust::estimator::estimate_policy_value;
    use driftrobust::policy::ConstantPolicy;
    use driftrobust::EstimatorConfig;
    let truth = bernoulli_truth(delta);
    (0..reps)
        .filter(|&rep| {
            let data = bernoulli_constant(n, 10_000 + rep);
            let cfg = EstimatorConfig {
                seed: rep,
                ..EstimatorConfig::default()
            };
            let r = estimate_policy_value(&data, &ConstantPolicy(0), radius(delta), &cfg).unwrap();
            let (lo, hi) = r.interval(1.959_963_984_540_054);
            (lo..=hi).contains(&truth)
        })
        .count() as u64
}
