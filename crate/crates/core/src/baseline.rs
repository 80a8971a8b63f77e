//! Joint-shift comparator: robust policy learning against a KL ball on the
//! joint law of `(X, Y)`, with self-normalised inverse-propensity weights.
//!
//! For a policy `π` the joint worst case has the scalar dual
//! `V(π) = max_α −α·log(C_α(π)/D(π)) − αδ`, with
//! `C_α(π) = Σ_i w_i·1{π(X_i)=A_i}·e^{−Y_i/α}` and `D(π) = Σ_i w_i·1{π(X_i)=A_i}`.
//! For a fixed `α` the ratio `C_α/D` is minimised exactly over trees by
//! Dinkelbach iterations, each of which is an additive tree search. The
//! outer maximisation over `α` runs on a log grid with local refinement, and
//! the final tree is the candidate with the largest `V(π)`.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dual::{RadiusDelta, DEFAULT_ALPHA_FLOOR};
use crate::learner::{search_policy_tree, PolicyTree, ScoreMatrix};
use crate::nuisance::{fit_propensity, PropensityConfig};
use crate::policy::Policy;
use crate::rng::{self, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointDualValue {
    pub alpha_star: f64,
    pub value: f64,
}

const GOLDEN_ITERATIONS: usize = 200;

/// Upper end of the `α` search interval for rewards spanning `range`.
fn alpha_upper(range: f64) -> f64 {
    10.0 * range + 1.0
}

/// `−α·log(Σ w e^{−y/α} / Σ w) − αδ`, evaluated with a shift by `min y`.
fn joint_objective(ys: &[f64], weights: &[f64], total: f64, ymin: f64, alpha: f64, delta: f64) -> f64 {
    let s: f64 = ys.iter().zip(weights).map(|(y, w)| w * (-(y - ymin) / alpha).exp()).sum();
    ymin - alpha * (s / total).ln() - alpha * delta
}

/// Scalar dual of the worst-case weighted mean of `ys` over a KL ball of
/// radius `delta`, maximised by golden-section search over `log α`.
pub fn joint_dro_value(ys: &[f64], weights: &[f64], delta: RadiusDelta<f64>) -> Result<JointDualValue> {
    if ys.is_empty() {
        return Err(Error::EmptyInput("joint dual rewards"));
    }
    if ys.len() != weights.len() {
        return Err(Error::invalid("rewards and weights differ in length"));
    }
    if ys.iter().chain(weights).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("joint dual input"));
    }
    if weights.iter().any(|&w| w < 0.0) {
        return Err(Error::invalid("weights must be non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("weights must have positive sum"));
    }
    let ymin = ys.iter().zip(weights).filter(|(_, &w)| w > 0.0).map(|(y, _)| *y).fold(f64::INFINITY, f64::min);
    let ymax = ys.iter().zip(weights).filter(|(_, &w)| w > 0.0).map(|(y, _)| *y).fold(f64::NEG_INFINITY, f64::max);
    let d = delta.get();
    let hi = alpha_upper(ymax - ymin);
    if d == 0.0 {
        let mean = ys.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / total;
        return Ok(JointDualValue {
            alpha_star: hi,
            value: mean,
        });
    }
    let f = |t: f64| joint_objective(ys, weights, total, ymin, t.exp(), d);
    let (mut a, mut b) = (DEFAULT_ALPHA_FLOOR.ln(), hi.ln());
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut e = a + phi * (b - a);
    let (mut fc, mut fe) = (f(c), f(e));
    for _ in 0..GOLDEN_ITERATIONS {
        if b - a < 1e-12 {
            break;
        }
        if fc >= fe {
            b = e;
            e = c;
            fe = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + phi * (b - a);
            fe = f(e);
        }
    }
    let mut best = (0.5 * (a + b), f(0.5 * (a + b)));
    for t in [DEFAULT_ALPHA_FLOOR.ln(), hi.ln()] {
        let v = f(t);
        if v > best.1 {
            best = (t, v);
        }
    }
    Ok(JointDualValue {
        alpha_star: best.0.exp(),
        value: best.1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub propensity: PropensityConfig,
    pub seed: u64,
    /// Log-spaced `α` values in the coarse grid.
    pub alpha_grid: usize,
    /// Rounds of geometric bisection around the best grid `α`.
    pub refine_rounds: usize,
    pub max_dinkelbach: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            propensity: PropensityConfig::default(),
            seed: 0,
            alpha_grid: 12,
            refine_rounds: 3,
            max_dinkelbach: 30,
        }
    }
}

/// Self-normalised IPW inputs shared by every candidate policy.
struct Weighted<'a> {
    data: &'a Dataset,
    weights: Vec<f64>,
    ymin: f64,
}

impl Weighted<'_> {
    fn on_policy(&self, policy: &dyn Policy) -> (Vec<f64>, Vec<f64>) {
        let mut ys = Vec::new();
        let mut ws = Vec::new();
        for i in 0..self.data.len() {
            if policy.action(self.data.row(i)) == self.data.action(i) {
                ys.push(self.data.reward(i));
                ws.push(self.weights[i]);
            }
        }
        (ys, ws)
    }

    fn value(&self, policy: &dyn Policy, delta: RadiusDelta<f64>) -> f64 {
        let (ys, ws) = self.on_policy(policy);
        if ys.is_empty() {
            return f64::NEG_INFINITY;
        }
        joint_dro_value(&ys, &ws, delta).map_or(f64::NEG_INFINITY, |v| v.value)
    }

    /// `(C_α(π), D(π))` with `C` computed on rewards shifted by `min y`.
    fn ratio_parts(&self, policy: &dyn Policy, alpha: f64) -> (f64, f64) {
        let (mut c, mut d) = (0.0, 0.0);
        for i in 0..self.data.len() {
            if policy.action(self.data.row(i)) == self.data.action(i) {
                c += self.weights[i] * (-(self.data.reward(i) - self.ymin) / alpha).exp();
                d += self.weights[i];
            }
        }
        (c, d)
    }

    /// Tree minimising `C_α/D` by Dinkelbach iterations.
    fn dinkelbach(&self, alpha: f64, depth: usize, max_iter: usize) -> Result<PolicyTree> {
        let (n, m) = (self.data.len(), self.data.num_actions());
        let tilt: Vec<f64> = (0..n)
            .map(|i| self.weights[i] * (-(self.data.reward(i) - self.ymin) / alpha).exp())
            .collect();
        let mut tree = PolicyTree::leaf(0);
        let mut lambda = f64::INFINITY;
        for a in 0..m {
            let leaf = PolicyTree::leaf(a);
            let (c, d) = self.ratio_parts(&leaf, alpha);
            if d > 0.0 && c / d < lambda {
                lambda = c / d;
                tree = leaf;
            }
        }
        for _ in 0..max_iter {
            let mut values = vec![0.0; n * m];
            for i in 0..n {
                let a = self.data.action(i);
                values[i * m + a] = -(tilt[i] - lambda * self.weights[i]);
            }
            let scores = ScoreMatrix::new(n, m, values)?;
            let (next, gain) = search_policy_tree(&scores, self.data.covariates(), self.data.dim(), depth)?;
            let (c, d) = self.ratio_parts(&next, alpha);
            if !(gain > 1e-12 * lambda.max(1e-300)) || d <= 0.0 || c / d >= lambda {
                break;
            }
            lambda = c / d;
            tree = next;
        }
        Ok(tree)
    }
}

/// Depth-≤`depth` tree maximising the joint-shift robust value of
/// self-normalised IPW-weighted rewards. The propensity is fitted on all rows.
pub fn learn_joint_dro(data: &Dataset, delta: RadiusDelta<f64>, depth: usize, cfg: &BaselineConfig) -> Result<PolicyTree> {
    if data.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    if depth > crate::learner::MAX_DEPTH {
        return Err(Error::UnsupportedDepth(depth));
    }
    if data.num_actions() == 1 {
        return Ok(PolicyTree::leaf(0));
    }
    let model = fit_propensity(data, &cfg.propensity, rng::derive(cfg.seed, &[stream::PROPENSITY]))?;
    let weights: Vec<f64> = (0..data.len()).map(|i| 1.0 / model.predict(data.row(i), data.action(i))).collect();
    let ymin = data.rewards().iter().copied().fold(f64::INFINITY, f64::min);
    let ymax = data.rewards().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w = Weighted { data, weights, ymin };

    // Below range/500 the tilt underflows for every row but the minimum.
    let lo = DEFAULT_ALPHA_FLOOR.max((ymax - ymin) / 500.0).ln();
    let hi = alpha_upper(ymax - ymin).ln();
    let k = cfg.alpha_grid.max(2);
    let grid: Vec<f64> = (0..k).map(|j| lo + (hi - lo) * j as f64 / (k - 1) as f64).collect();

    let mut candidates: Vec<(f64, PolicyTree, f64)> = Vec::new();
    let consider = |t: f64, candidates: &mut Vec<(f64, PolicyTree, f64)>| -> Result<()> {
        let tree = w.dinkelbach(t.exp(), depth, cfg.max_dinkelbach)?;
        let v = match candidates.iter().find(|c| c.1 == tree) {
            Some(c) => c.2,
            None => w.value(&tree, delta),
        };
        candidates.push((t, tree, v));
        Ok(())
    };
    for &t in &grid {
        consider(t, &mut candidates)?;
    }
    let mut step = (hi - lo) / (k - 1) as f64;
    for _ in 0..cfg.refine_rounds {
        step *= 0.5;
        let best_t = best_of(&candidates).0;
        for t in [best_t - step, best_t + step] {
            if t > lo && t < hi {
                consider(t, &mut candidates)?;
            }
        }
    }
    Ok(best_of(&candidates).1.clone())
}

/// Largest value; earlier candidates win ties.
fn best_of(c: &[(f64, PolicyTree, f64)]) -> &(f64, PolicyTree, f64) {
    let mut best = &c[0];
    for x in &c[1..] {
        if x.2 > best.2 {
            best = x;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::bernoulli_worst_mean;

    fn r(d: f64) -> RadiusDelta<f64> {
        RadiusDelta::new(d).unwrap()
    }

    #[test]
    fn point_mass_value() {
        let v = joint_dro_value(&[0.7; 5], &[1.0; 5], r(0.2)).unwrap();
        assert!((v.value - 0.7).abs() <= 2.0 * DEFAULT_ALPHA_FLOOR * 0.2, "{v:?}");
    }

    #[test]
    fn bernoulli_matches_oracle() {
        let v = joint_dro_value(&[0.0, 1.0], &[1.0, 1.0], r(0.1)).unwrap();
        let oracle = bernoulli_worst_mean(0.5, r(0.1)).unwrap();
        assert!((v.value - oracle).abs() < 1e-9, "{} vs {oracle}", v.value);
        assert!((oracle - 0.280_205_373_838_590_27).abs() < 1e-12);
    }

    #[test]
    fn zero_radius_is_weighted_mean() {
        let v = joint_dro_value(&[1.0, 2.0, 4.0], &[1.0, 2.0, 1.0], r(0.0)).unwrap();
        assert!((v.value - 2.25).abs() < 1e-12);
    }

    #[test]
    fn input_validation() {
        assert!(joint_dro_value(&[1.0], &[0.0], r(0.1)).is_err());
        assert!(joint_dro_value(&[1.0, 2.0], &[1.0], r(0.1)).is_err());
        assert!(joint_dro_value(&[1.0], &[-1.0], r(0.1)).is_err());
        assert!(joint_dro_value(&[], &[], r(0.1)).is_err());
    }

    #[test]
    fn single_action_is_constant() {
        let d = Dataset::new(1, 1, vec![0.0, 1.0], vec![0, 0], vec![1.0, 2.0]).unwrap();
        assert_eq!(learn_joint_dro(&d, r(0.1), 2, &BaselineConfig::default()).unwrap(), PolicyTree::leaf(0));
    }

    #[test]
    fn dominant_action_is_recovered() {
        let n = 600;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.618_034).fract()).collect();
        let a: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let y: Vec<f64> = (0..n).map(|i| if a[i] == 2 { 1.0 + 0.1 * x[i] } else { 0.1 * x[i] }).collect();
        let d = Dataset::new(1, 3, x, a, y).unwrap();
        let cfg = BaselineConfig::default();
        assert_eq!(learn_joint_dro(&d, r(0.1), 0, &cfg).unwrap(), PolicyTree::leaf(2));
        // Deeper trees may route a few rows to unlogged actions, which drops
        // them from the self-normalised sample.
        let tree = learn_joint_dro(&d, r(0.1), 2, &cfg).unwrap();
        let plays_two = (0..n).filter(|&i| tree.action(d.row(i)) == 2).count();
        assert!(plays_two as f64 >= 0.95 * n as f64, "{tree:?}");
    }

    #[test]
    fn split_is_found_when_it_helps() {
        let n = 900;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.618_034).fract()).collect();
        let a: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let y: Vec<f64> = (0..n).map(|i| if (x[i] <= 0.5) == (a[i] == 0) { 1.0 } else { 0.0 }).collect();
        let d = Dataset::new(1, 2, x, a, y).unwrap();
        let tree = learn_joint_dro(&d, r(0.1), 1, &BaselineConfig::default()).unwrap();
        assert_eq!(tree.action(&[0.2]), 0);
        assert_eq!(tree.action(&[0.8]), 1);
    }
}
