//! Logging-policy (propensity) models with an overlap floor.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::tree::{BaggedTrees, TreeParams};
use crate::data::Dataset;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PropensityKind {
    /// Multinomial logistic regression on the raw covariates, ridge-penalised.
    Logistic { ridge: f64 },
    /// Bagged classification trees (one-hot targets, Gini splits).
    BaggedTrees { bags: usize, max_depth: usize, min_leaf: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropensityConfig {
    pub kind: PropensityKind,
    pub clip_floor: f64,
}

impl Default for PropensityConfig {
    fn default() -> Self {
        Self {
            kind: PropensityKind::BaggedTrees {
                bags: 32,
                max_depth: 6,
                min_leaf: 25,
            },
            clip_floor: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Fitted {
    Logistic {
        /// Row-major `M × (d+1)` on standardised covariates.
        coef: Vec<f64>,
        center: Vec<f64>,
        scale: Vec<f64>,
    },
    Trees(BaggedTrees),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    num_actions: usize,
    clip_floor: f64,
    fitted: Fitted,
}

/// Raise every probability below `floor` to `floor`, shrinking the rest
/// proportionally so the vector still sums to one. Untouched entries keep
/// their ratios.
pub fn clip_probabilities(p: &mut [f64], floor: f64) {
    let m = p.len();
    let total: f64 = p.iter().sum();
    if !(total > 0.0) {
        p.iter_mut().for_each(|v| *v = 1.0 / m as f64);
    } else {
        p.iter_mut().for_each(|v| *v /= total);
    }
    let mut clipped = vec![false; m];
    loop {
        let mut changed = false;
        for i in 0..m {
            if !clipped[i] && p[i] < floor {
                clipped[i] = true;
                changed = true;
            }
        }
        let free_mass = 1.0 - floor * clipped.iter().filter(|&&c| c).count() as f64;
        let free_sum: f64 = (0..m).filter(|&i| !clipped[i]).map(|i| p[i]).sum();
        for i in 0..m {
            if clipped[i] {
                p[i] = floor;
            } else if free_sum > 0.0 {
                p[i] *= free_mass / free_sum;
            }
        }
        if !changed {
            break;
        }
    }
}

impl PropensityModel {
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn clip_floor(&self) -> f64 {
        self.clip_floor
    }

    /// Clipped probabilities over all actions at `x`.
    pub fn predict_all_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.fitted {
            Fitted::Trees(t) => t.predict_into(x, out),
            Fitted::Logistic { coef, center, scale } => {
                let d = center.len();
                for (a, o) in out.iter_mut().enumerate() {
                    let c = &coef[a * (d + 1)..(a + 1) * (d + 1)];
                    *o = c[0] + (0..d).map(|j| c[j + 1] * (x[j] - center[j]) / scale[j]).sum::<f64>();
                }
                softmax_in_place(out);
            }
        }
        clip_probabilities(out, self.clip_floor);
    }

    pub fn predict_all(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_actions];
        self.predict_all_into(x, &mut out);
        out
    }

    /// Clipped `π̂₀(a | x)`.
    pub fn predict(&self, x: &[f64], a: usize) -> f64 {
        self.predict_all(x)[a]
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for e in v.iter_mut() {
        *e = (*e - mx).exp();
        s += *e;
    }
    v.iter_mut().for_each(|e| *e /= s);
}

/// Fit `π̂₀(a|x)` on a logged dataset.
///
/// Actions never observed get probability `clip_floor` (with a warning)
/// rather than making the model partial.
pub fn fit_propensity(data: &Dataset, cfg: &PropensityConfig, seed: u64) -> Result<PropensityModel> {
    if data.is_empty() {
        return Err(Error::EmptyInput("propensity training data"));
    }
    let m = data.num_actions();
    if !(cfg.clip_floor > 0.0 && cfg.clip_floor < 0.5 && cfg.clip_floor * m as f64 <= 1.0) {
        return Err(Error::invalid(format!("clip_floor {} must lie in (0, min(0.5, 1/M)]", cfg.clip_floor)));
    }
    let mut counts = vec![0usize; m];
    for &a in data.actions() {
        counts[a] += 1;
    }
    if let Some(a) = counts.iter().position(|&c| c == 0) {
        warn!("action {} absent from propensity training data; its probability is floored", a + 1);
    }
    let n = data.len();
    let dim = data.dim();
    let fitted = match cfg.kind {
        PropensityKind::BaggedTrees {
            bags,
            max_depth,
            min_leaf,
        } => {
            let mut y = vec![0.0; n * m];
            for (i, &a) in data.actions().iter().enumerate() {
                y[i * m + a] = 1.0;
            }
            Fitted::Trees(BaggedTrees::fit(
                data.covariates(),
                dim,
                &y,
                m,
                bags,
                TreeParams { max_depth, min_leaf },
                seed,
            ))
        }
        PropensityKind::Logistic { ridge } => fit_logistic(data, ridge)?,
    };
    Ok(PropensityModel {
        num_actions: m,
        clip_floor: cfg.clip_floor,
        fitted,
    })
}

fn fit_logistic(data: &Dataset, ridge: f64) -> Result<Fitted> {
    let (n, d, m) = (data.len(), data.dim(), data.num_actions());
    let mut center = vec![0.0; d];
    let mut scale = vec![1.0; d];
    for j in 0..d {
        let col = (0..n).map(|i| data.row(i)[j]);
        let mean = col.clone().sum::<f64>() / n as f64;
        let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        center[j] = mean;
        scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let p = d + 1;
    let feats: Vec<f64> = (0..n)
        .flat_map(|i| {
            let row = data.row(i);
            std::iter::once(1.0).chain((0..d).map(|j| (row[j] - center[j]) / scale[j])).collect::<Vec<_>>()
        })
        .collect();
    let ridge = ridge.max(1e-10) * n as f64;
    let objective = |coef: &[f64]| -> f64 {
        let mut s = 0.0;
        let mut eta = vec![0.0; m];
        for i in 0..n {
            let f = &feats[i * p..(i + 1) * p];
            for a in 0..m {
                eta[a] = coef[a * p..(a + 1) * p].iter().zip(f).map(|(c, v)| c * v).sum();
            }
            let mx = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + eta.iter().map(|e| (e - mx).exp()).sum::<f64>().ln();
            s += lse - eta[data.action(i)];
        }
        s + 0.5 * ridge * coef.iter().map(|c| c * c).sum::<f64>()
    };
    let mut coef = vec![0.0; m * p];
    let mut value = objective(&coef);
    for _ in 0..50 {
        let mut grad = DVector::<f64>::zeros(m * p);
        let mut hess = DMatrix::<f64>::zeros(m * p, m * p);
        let mut prob = vec![0.0; m];
        for i in 0..n {
            let f = &feats[i * p..(i + 1) * p];
            for a in 0..m {
                prob[a] = coef[a * p..(a + 1) * p].iter().zip(f).map(|(c, v)| c * v).sum();
            }
            softmax_in_place(&mut prob);
            for a in 0..m {
                let r = prob[a] - if data.action(i) == a { 1.0 } else { 0.0 };
                for j in 0..p {
                    grad[a * p + j] += r * f[j];
                }
                for b in 0..m {
                    let w = prob[a] * (if a == b { 1.0 } else { 0.0 } - prob[b]);
                    if w == 0.0 {
                        continue;
                    }
                    for j in 0..p {
                        for k in 0..p {
                            hess[(a * p + j, b * p + k)] += w * f[j] * f[k];
                        }
                    }
                }
            }
        }
        for (k, c) in coef.iter().enumerate() {
            grad[k] += ridge * c;
            hess[(k, k)] += ridge;
        }
        let Some(chol) = hess.cholesky() else {
            return Err(Error::invalid("logistic propensity Hessian is not positive definite"));
        };
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial: Vec<f64> = coef.iter().zip(step.iter()).map(|(c, s)| c - t * s).collect();
            let v = objective(&trial);
            if v <= value {
                let gain = value - v;
                coef = trial;
                value = v;
                improved = gain > 1e-12 * (1.0 + value.abs());
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(Fitted::Logistic { coef, center, scale })
}
