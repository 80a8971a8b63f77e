//! Linear-boundary simulation on the unit 5-ball and the ring target policy.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::data::{Dataset, PotentialOutcomeTable};
use crate::policy::Policy;
use crate::rng::{self, stream};
use crate::{Error, Result};

pub const SIM_DIM: usize = 5;
pub const SIM_ACTIONS: usize = 3;

/// Outcome noise of each arm.
pub const SIM_SIGMA: [f64; SIM_ACTIONS] = [0.2, 0.5, 0.8];

/// Arm coefficients; only the first two coordinates are active.
pub fn sim_beta() -> [[f64; SIM_DIM]; SIM_ACTIONS] {
    let h = 3f64.sqrt() / 2.0;
    [
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [-0.5, h, 0.0, 0.0, 0.0],
        [-0.5, -h, 0.0, 0.0, 0.0],
    ]
}

/// `βₐᵀx` for every arm.
pub fn sim_means(x: &[f64]) -> [f64; SIM_ACTIONS] {
    let beta = sim_beta();
    let mut m = [0.0; SIM_ACTIONS];
    for (a, b) in beta.iter().enumerate() {
        m[a] = b.iter().zip(x).map(|(u, v)| u * v).sum();
    }
    m
}

/// Arm with the largest mean; lower index on ties.
pub fn sim_best_arm(x: &[f64]) -> usize {
    let m = sim_means(x);
    let mut best = 0;
    for a in 1..SIM_ACTIONS {
        if m[a] > m[best] {
            best = a;
        }
    }
    best
}

/// Logging probabilities: `0.5` on the best arm, `0.25` on each other arm.
pub fn sim_behavior(x: &[f64]) -> [f64; SIM_ACTIONS] {
    let mut p = [0.25; SIM_ACTIONS];
    p[sim_best_arm(x)] = 0.5;
    p
}

/// Full simulated sample: every potential outcome with its Gaussian law,
/// plus the logged action of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub table: PotentialOutcomeTable,
    pub actions: Vec<usize>,
}

impl Simulated {
    pub fn dataset(&self) -> Dataset {
        self.table.observe(self.actions.clone()).expect("simulated actions are in range")
    }
}

/// Output of [`simulate_linear_boundary`].
#[derive(Debug, Clone, PartialEq)]
pub enum Simulation {
    Logged(Dataset),
    Full(PotentialOutcomeTable),
}

/// Draw `n` rows: `X` uniform on the unit 5-ball, `Y(a) | X ~ N(βₐᵀX, σₐ²)`,
/// `A` from [`sim_behavior`].
pub fn simulate(n: usize, seed: u64) -> Result<Simulated> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut r = rng::rng_for(seed, &[stream::SIMULATE]);
    let mut x = Vec::with_capacity(n * SIM_DIM);
    let mut outcomes = Vec::with_capacity(n * SIM_ACTIONS);
    let mut mu = Vec::with_capacity(n * SIM_ACTIONS);
    let mut sigma = Vec::with_capacity(n * SIM_ACTIONS);
    let mut actions = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = [0.0; SIM_DIM];
        let mut norm2 = 0.0f64;
        while norm2 == 0.0 {
            for v in row.iter_mut() {
                *v = r.sample(StandardNormal);
            }
            norm2 = row.iter().map(|v| v * v).sum();
        }
        let radius = r.random::<f64>().powf(1.0 / SIM_DIM as f64) / norm2.sqrt();
        for v in row.iter_mut() {
            *v *= radius;
        }
        let means = sim_means(&row);
        let probs = sim_behavior(&row);
        let u: f64 = r.random();
        let mut acc = 0.0;
        let mut chosen = SIM_ACTIONS - 1;
        for (a, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                chosen = a;
                break;
            }
        }
        for a in 0..SIM_ACTIONS {
            let z: f64 = r.sample(StandardNormal);
            outcomes.push(means[a] + SIM_SIGMA[a] * z);
            mu.push(means[a]);
            sigma.push(SIM_SIGMA[a]);
        }
        x.extend_from_slice(&row);
        actions.push(chosen);
    }
    let table = PotentialOutcomeTable::new(SIM_DIM, SIM_ACTIONS, x, outcomes)?.with_gaussian_metadata(mu, sigma)?;
    Ok(Simulated { table, actions })
}

/// Logged data, or the full potential-outcome table, from [`simulate`].
pub fn simulate_linear_boundary(n: usize, seed: u64, with_potential_outcomes: bool) -> Result<Simulation> {
    let s = simulate(n, seed)?;
    Ok(if with_potential_outcomes {
        Simulation::Full(s.table)
    } else {
        Simulation::Logged(s.dataset())
    })
}

/// Ring assignment by `‖x‖₂`: `[0, 1/3] -> 0`, `(1/3, 2/3] -> 1`, `(2/3, 1] -> 2`.
pub fn target_policy_rings(x: &[f64]) -> Result<usize> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || norm > 1.0 + 1e-12 {
        return Err(Error::invalid(format!("ring policy needs ||x|| <= 1, got {norm}")));
    }
    Ok(ring_of(norm))
}

fn ring_of(norm: f64) -> usize {
    if norm <= 1.0 / 3.0 {
        0
    } else if norm <= 2.0 / 3.0 {
        1
    } else {
        2
    }
}

/// [`target_policy_rings`] as a [`Policy`]; points outside the ball fall in
/// the outer ring.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RingsPolicy;

impl Policy for RingsPolicy {
    fn action(&self, x: &[f64]) -> usize {
        ring_of(x.iter().map(|v| v * v).sum::<f64>().sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bit_identical() {
        assert_eq!(simulate(200, 3).unwrap(), simulate(200, 3).unwrap());
        assert_ne!(simulate(200, 3).unwrap(), simulate(200, 4).unwrap());
    }

    #[test]
    fn rows_lie_in_the_ball() {
        let s = simulate(2000, 1).unwrap();
        for i in 0..s.table.len() {
            let n2: f64 = s.table.row(i).iter().map(|v| v * v).sum();
            assert!(n2 <= 1.0);
        }
    }

    #[test]
    fn ring_examples() {
        assert_eq!(target_policy_rings(&[0.0; 5]).unwrap(), 0);
        assert_eq!(target_policy_rings(&[0.5, 0.0, 0.0, 0.0, 0.0]).unwrap(), 1);
        assert_eq!(target_policy_rings(&[0.0, 0.0, 1.0, 0.0, 0.0]).unwrap(), 2);
        assert_eq!(target_policy_rings(&[1.0 / 3.0, 0.0, 0.0, 0.0, 0.0]).unwrap(), 0);
        assert!(target_policy_rings(&[0.8, 0.8, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn logged_and_full_views_agree() {
        let Simulation::Logged(d) = simulate_linear_boundary(50, 9, false).unwrap() else { panic!() };
        let Simulation::Full(t) = simulate_linear_boundary(50, 9, true).unwrap() else { panic!() };
        for i in 0..50 {
            assert_eq!(d.reward(i), t.outcome(i, d.action(i)));
        }
    }
}
