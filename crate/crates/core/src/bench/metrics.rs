//! Test-set metrics: the empirical robust value, KL-sphere perturbation of
//! Gaussian outcome laws, and the worst mean over perturbed sets.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::data::PotentialOutcomeTable;
use crate::dual::RadiusDelta;
use crate::estimator::EstimatorConfig;
use crate::nuisance::fit_dual_field_xy;
use crate::policy::Policy;
use crate::rng::{self, stream};
use crate::{Error, Result};

/// `−(1/n) Σ ℓ(Y_i(π(X_i)); θ̂(X_i), δ)` with `θ̂` fitted on the same
/// chosen outcomes using the configured sieve.
pub fn empirical_robust_value(
    test: &PotentialOutcomeTable,
    policy: &dyn Policy,
    delta: RadiusDelta<f64>,
    cfg: &EstimatorConfig,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyInput("test table"));
    }
    let ys = test.chosen_outcomes(policy);
    let field = fit_dual_field_xy(&test.x, test.dim, &ys, delta, cfg.basis_for(test.dim), &cfg.dual_field)?;
    Ok(-field.risk())
}

/// Move every Gaussian outcome law to KL distance exactly `δ`
/// (mean shift `±σ√(2δ)` with an independent random sign) and redraw the
/// outcomes from the shifted laws.
pub fn kl_sphere_perturb(test: &PotentialOutcomeTable, delta: RadiusDelta<f64>, seed: u64) -> Result<PotentialOutcomeTable> {
    let (Some(mu), Some(sigma)) = (&test.mu, &test.sigma) else {
        return Err(Error::MissingMetadata("kl_sphere_perturb needs Gaussian mu/sigma columns"));
    };
    let mut r = rng::rng_for(seed, &[stream::PERTURB]);
    let step = (2.0 * delta.get()).sqrt();
    let mut new_mu = Vec::with_capacity(mu.len());
    let mut outcomes = Vec::with_capacity(mu.len());
    for (&m, &s) in mu.iter().zip(sigma) {
        let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
        let shifted = m + sign * s * step;
        let z: f64 = r.sample(StandardNormal);
        new_mu.push(shifted);
        outcomes.push(shifted + s * z);
    }
    PotentialOutcomeTable::new(test.dim, test.num_actions, test.x.clone(), outcomes)?.with_gaussian_metadata(new_mu, sigma.clone())
}

/// `KL(N(m₁, s²) ‖ N(m₀, s²)) = (m₁ − m₀)² / (2s²)`.
pub fn gaussian_kl_equal_variance(m1: f64, m0: f64, s: f64) -> f64 {
    (m1 - m0).powi(2) / (2.0 * s * s)
}

/// Minimum over sets of the policy's mean realised reward.
pub fn v_min_metric(policy: &dyn Policy, sets: &[PotentialOutcomeTable]) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::EmptyInput("perturbed sets"));
    }
    if sets.iter().any(|s| s.is_empty()) {
        return Err(Error::EmptyInput("perturbed set"));
    }
    Ok(sets.iter().map(|s| s.mean_reward(policy)).fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{simulate, RingsPolicy};
    use crate::policy::ConstantPolicy;

    fn r(d: f64) -> RadiusDelta<f64> {
        RadiusDelta::new(d).unwrap()
    }

    #[test]
    fn perturbation_hits_the_sphere() {
        let t = simulate(100, 2).unwrap().table;
        let p = kl_sphere_perturb(&t, r(0.1), 5).unwrap();
        let (m0, m1, s) = (t.mu.as_ref().unwrap(), p.mu.as_ref().unwrap(), p.sigma.as_ref().unwrap());
        for k in 0..m0.len() {
            assert!((gaussian_kl_equal_variance(m1[k], m0[k], s[k]) - 0.1).abs() < 1e-12);
        }
        assert_eq!(p.sigma, t.sigma);
        // Arm 1 has sigma 0.2.
        assert!(((m1[0] - m0[0]).abs() - 0.089_442_719_099_991_59).abs() < 1e-15);
    }

    #[test]
    fn perturbation_needs_metadata() {
        let t = PotentialOutcomeTable::new(1, 2, vec![0.0], vec![1.0, 2.0]).unwrap();
        let e = kl_sphere_perturb(&t, r(0.1), 0).unwrap_err();
        assert!(matches!(e, Error::MissingMetadata(_)));
    }

    #[test]
    fn v_min_takes_the_worst_set() {
        let a = PotentialOutcomeTable::new(1, 2, vec![0.0, 1.0], vec![1.0, 0.0, 3.0, 0.0]).unwrap();
        let b = PotentialOutcomeTable::new(1, 2, vec![0.0, 1.0], vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let p = ConstantPolicy(0);
        assert_eq!(v_min_metric(&p, std::slice::from_ref(&a)).unwrap(), 2.0);
        assert_eq!(v_min_metric(&p, &[a.clone(), a.clone()]).unwrap(), 2.0);
        assert_eq!(v_min_metric(&p, &[a, b]).unwrap(), 0.5);
        assert!(v_min_metric(&p, &[]).is_err());
    }

    #[test]
    fn constant_outcomes_are_their_own_worst_case() {
        let n = 200;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let t = PotentialOutcomeTable::new(1, 1, x, vec![0.5; n]).unwrap();
        for d in [0.0, 0.1, 0.3] {
            let v = empirical_robust_value(&t, &ConstantPolicy(0), r(d), &EstimatorConfig::default()).unwrap();
            assert!((v - 0.5).abs() < 0.01, "{d}: {v}");
        }
    }

    #[test]
    fn zero_radius_gives_the_plain_mean() {
        let t = simulate(2000, 4).unwrap().table;
        let v = empirical_robust_value(&t, &RingsPolicy, r(0.0), &EstimatorConfig::default()).unwrap();
        assert!((v - t.mean_reward(&RingsPolicy)).abs() < 0.01, "{v}");
    }
}
