//! Conditional-mean regressions `ĝ(x) ≈ E[target | X = x]`.

use serde::{Deserialize, Serialize};

use super::tree::{BaggedTrees, TreeParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressionKind {
    BaggedTrees { bags: usize, max_depth: usize, min_leaf: usize },
    /// Gaussian-kernel smoother on standardised covariates; `None` picks the
    /// bandwidth by Silverman's rule.
    NadarayaWatson { bandwidth: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionConfig {
    pub kind: RegressionKind,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            kind: RegressionKind::BaggedTrees {
                bags: 64,
                max_depth: 6,
                min_leaf: 5,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Fitted {
    Trees(BaggedTrees),
    Kernel {
        points: Vec<f64>,
        targets: Vec<f64>,
        center: Vec<f64>,
        scale: Vec<f64>,
        bandwidth: f64,
    },
    /// Predicts a fixed value everywhere.
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    dim: usize,
    fitted: Fitted,
}

impl RegressionModel {
    pub fn constant(dim: usize, value: f64) -> Self {
        Self {
            dim,
            fitted: Fitted::Constant(value),
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match &self.fitted {
            Fitted::Constant(c) => *c,
            Fitted::Trees(t) => {
                let mut out = [0.0];
                t.predict_into(x, &mut out);
                out[0]
            }
            Fitted::Kernel {
                points,
                targets,
                center,
                scale,
                bandwidth,
            } => {
                let d = self.dim;
                let z: Vec<f64> = (0..d).map(|j| (x[j] - center[j]) / scale[j]).collect();
                let sq: Vec<f64> = points
                    .chunks_exact(d)
                    .map(|p| p.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum())
                    .collect();
                // Shift by the nearest distance so at least one weight is 1.
                let nearest = sq.iter().copied().fold(f64::INFINITY, f64::min);
                let inv = 0.5 / (bandwidth * bandwidth);
                let (mut num, mut den) = (0.0, 0.0);
                for (s, t) in sq.iter().zip(targets) {
                    let w = (-(s - nearest) * inv).exp();
                    num += w * t;
                    den += w;
                }
                num / den
            }
        }
    }

    pub fn predict_many(&self, x: &[f64]) -> Vec<f64> {
        x.chunks_exact(self.dim).map(|r| self.predict(r)).collect()
    }
}

/// Fit a conditional-mean model of `targets` on row-major covariates `x`.
pub fn fit_regression(x: &[f64], dim: usize, targets: &[f64], cfg: &RegressionConfig, seed: u64) -> Result<RegressionModel> {
    if targets.is_empty() {
        return Err(Error::EmptyInput("regression pairs"));
    }
    if dim == 0 || x.len() != targets.len() * dim {
        return Err(Error::invalid("covariate and target lengths disagree"));
    }
    if x.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression inputs"));
    }
    let n = targets.len();
    let fitted = match cfg.kind {
        RegressionKind::BaggedTrees {
            bags,
            max_depth,
            min_leaf,
        } => Fitted::Trees(BaggedTrees::fit(x, dim, targets, 1, bags, TreeParams { max_depth, min_leaf }, seed)),
        RegressionKind::NadarayaWatson { bandwidth } => {
            let mut center = vec![0.0; dim];
            let mut scale = vec![1.0; dim];
            for j in 0..dim {
                let mean = (0..n).map(|i| x[i * dim + j]).sum::<f64>() / n as f64;
                let var = (0..n).map(|i| (x[i * dim + j] - mean).powi(2)).sum::<f64>() / n as f64;
                center[j] = mean;
                scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
            }
            let points = (0..n * dim).map(|k| (x[k] - center[k % dim]) / scale[k % dim]).collect();
            let d = dim as f64;
            let h = bandwidth.unwrap_or_else(|| (4.0 / (d + 2.0)).powf(1.0 / (d + 4.0)) * (n as f64).powf(-1.0 / (d + 4.0)));
            if !(h > 0.0) {
                return Err(Error::invalid("bandwidth must be positive"));
            }
            Fitted::Kernel {
                points,
                targets: targets.to_vec(),
                center,
                scale,
                bandwidth: h,
            }
        }
    };
    Ok(RegressionModel { dim, fitted })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds() -> [RegressionConfig; 2] {
        [
            RegressionConfig::default(),
            RegressionConfig {
                kind: RegressionKind::NadarayaWatson { bandwidth: None },
            },
        ]
    }

    #[test]
    fn constant_targets() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y = vec![0.7; 50];
        for cfg in kinds() {
            let m = fit_regression(&x, 1, &y, &cfg, 1).unwrap();
            for q in [-3.0, 0.0, 2.2, 40.0] {
                assert!((m.predict(&[q]) - 0.7).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_pair() {
        for cfg in kinds() {
            let m = fit_regression(&[0.3, 0.4], 2, &[-1.5], &cfg, 1).unwrap();
            assert!((m.predict(&[9.0, -9.0]) + 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_is_an_error() {
        assert!(fit_regression(&[], 1, &[], &RegressionConfig::default(), 0).is_err());
    }

    #[test]
    fn far_queries_stay_finite() {
        let cfg = RegressionConfig {
            kind: RegressionKind::NadarayaWatson { bandwidth: Some(1e-3) },
        };
        let m = fit_regression(&[0.0, 1.0], 1, &[2.0, 4.0], &cfg, 0).unwrap();
        assert_eq!(m.predict(&[1e6]), 4.0);
    }
}
