//! Adversarial two-arm-per-point instances.
//!
//! Covariates are the support points `x_j = j` (one coordinate). At each
//! point, arm `0` plays the role of `f₊₁` and arm `1` of `f₋₁`; their outcomes
//! are `ȳ·Bern((1 ± σ_jΔ)/2)` and every other arm gives `ȳ·Bern(1/4)`. The
//! logging policy puts `ε/2` on each of arms 0 and 1 and spreads the rest.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dual::{bernoulli_worst_mean, RadiusDelta};
use crate::policy::Policy;
use crate::rng::{self, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardInstanceConfig {
    /// Number of support points `d`.
    pub support: usize,
    /// Gap `Δ ∈ [0, 0.1)`.
    pub gap: f64,
    /// Logging mass `ε ∈ (0, 1)` shared by arms 0 and 1.
    pub epsilon: f64,
    pub sigma_seed: u64,
    pub n: usize,
    pub seed: u64,
    /// KL radius used for the attached robust values.
    pub radius: f64,
    pub num_actions: usize,
    pub y_bar: f64,
}

impl Default for HardInstanceConfig {
    fn default() -> Self {
        Self {
            support: 4,
            gap: 0.05,
            epsilon: 0.2,
            sigma_seed: 0,
            n: 1000,
            seed: 0,
            radius: 0.1,
            num_actions: 3,
            y_bar: 1.0,
        }
    }
}

/// A sampled dataset with its sign vector and exact robust values.
#[derive(Debug, Clone, PartialEq)]
pub struct HardInstance {
    pub data: Dataset,
    pub sigma: Vec<i8>,
    pub config: HardInstanceConfig,
    /// `ȳ·g_δ(q)` for `q = (1+Δ)/2`, `(1−Δ)/2` and `1/4`.
    arm_values: [f64; 3],
}

impl HardInstance {
    /// Arm `0` when `σ_j = +1`, arm `1` otherwise.
    pub fn optimal_action(&self, j: usize) -> usize {
        usize::from(self.sigma[j] < 0)
    }

    pub fn optimal_policy(&self) -> HardInstancePolicy {
        HardInstancePolicy((0..self.sigma.len()).map(|j| self.optimal_action(j)).collect())
    }

    pub fn optimal_value(&self) -> f64 {
        self.arm_values[0]
    }

    /// Robust value of `policy`, averaged over the support points.
    pub fn robust_value(&self, policy: &dyn Policy) -> f64 {
        let d = self.sigma.len();
        let mut s = 0.0;
        for j in 0..d {
            let a = policy.action(&[j as f64]);
            s += if a == self.optimal_action(j) {
                self.arm_values[0]
            } else if a < 2 {
                self.arm_values[1]
            } else {
                self.arm_values[2]
            };
        }
        s / d as f64
    }

    pub fn regret(&self, policy: &dyn Policy) -> f64 {
        self.optimal_value() - self.robust_value(policy)
    }
}

/// Table lookup on the support index; indices past the table use its last entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardInstancePolicy(pub Vec<usize>);

impl Policy for HardInstancePolicy {
    fn action(&self, x: &[f64]) -> usize {
        let j = (x[0].max(0.0).round() as usize).min(self.0.len() - 1);
        self.0[j]
    }
}

pub fn hard_instance_generator(cfg: &HardInstanceConfig) -> Result<HardInstance> {
    if cfg.support == 0 || cfg.n == 0 {
        return Err(Error::invalid("support size and n must be positive"));
    }
    if !(0.0..0.1).contains(&cfg.gap) {
        return Err(Error::invalid(format!("gap must lie in [0, 0.1), got {}", cfg.gap)));
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 1), got {}", cfg.epsilon)));
    }
    if cfg.num_actions < 3 {
        return Err(Error::invalid("hard instances need at least 3 actions"));
    }
    // Keeps the essential infimum of every arm off the worst case: ln(1/(1-1/4)).
    if !(cfg.radius >= 0.0 && cfg.radius < (4.0f64 / 3.0).ln()) {
        return Err(Error::invalid(format!("radius must lie in [0, ln(4/3)), got {}", cfg.radius)));
    }
    if !(cfg.y_bar > 0.0 && cfg.y_bar.is_finite()) {
        return Err(Error::invalid("y_bar must be positive"));
    }
    let delta = RadiusDelta::new(cfg.radius)?;
    let mut rs = rng::rng_for(cfg.sigma_seed, &[stream::SIMULATE]);
    let sigma: Vec<i8> = (0..cfg.support).map(|_| if rs.random::<bool>() { 1 } else { -1 }).collect();

    let m = cfg.num_actions;
    let rest = (1.0 - cfg.epsilon) / (m - 2) as f64;
    let mut r = rng::rng_for(cfg.seed, &[stream::SIMULATE]);
    let mut x = Vec::with_capacity(cfg.n);
    let mut actions = Vec::with_capacity(cfg.n);
    let mut rewards = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let j = r.random_range(0..cfg.support);
        let u: f64 = r.random();
        let a = if u < cfg.epsilon / 2.0 {
            0
        } else if u < cfg.epsilon {
            1
        } else {
            (2 + ((u - cfg.epsilon) / rest) as usize).min(m - 1)
        };
        let s = f64::from(sigma[j]);
        let q = match a {
            0 => (1.0 + s * cfg.gap) / 2.0,
            1 => (1.0 - s * cfg.gap) / 2.0,
            _ => 0.25,
        };
        x.push(j as f64);
        actions.push(a);
        rewards.push(if r.random::<f64>() < q { cfg.y_bar } else { 0.0 });
    }
    let arm_values = [
        cfg.y_bar * bernoulli_worst_mean((1.0 + cfg.gap) / 2.0, delta)?,
        cfg.y_bar * bernoulli_worst_mean((1.0 - cfg.gap) / 2.0, delta)?,
        cfg.y_bar * bernoulli_worst_mean(0.25, delta)?,
    ];
    Ok(HardInstance {
        data: Dataset::new(1, m, x, actions, rewards)?,
        sigma,
        config: *cfg,
        arm_values,
    })
}
