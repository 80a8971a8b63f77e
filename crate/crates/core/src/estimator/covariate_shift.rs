//! Robust value under a known-sample covariate shift plus concept drift.
//!
//! The inverse-weighted correction is reweighted by the covariate density
//! ratio `r(x) = dQ_X/dP_X`, and the regression term is averaged over the
//! target covariates instead of the source ones.

use std::fmt;
use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};

use super::{fit_policy_nuisances, make_folds, Diagnostics, EstimatorConfig, RobustValueReport};
use crate::data::Dataset;
use crate::dual::RadiusDelta;
use crate::nuisance::{g_hat_target, BasisSpec, FeatureMap};
use crate::policy::Policy;
use crate::rng::{self, stream};
use crate::{Error, Result};

#[derive(Clone)]
pub enum RatioSource {
    /// Fit a logistic source-vs-target discriminator on quadratic features.
    Classifier,
    /// Use a supplied ratio function.
    Known(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for RatioSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RatioSource::Classifier => f.write_str("Classifier"),
            RatioSource::Known(_) => f.write_str("Known(..)"),
        }
    }
}

/// `r̂(x) = (n_source / n_target) · P̂(target | x) / P̂(source | x)`, capped.
#[derive(Debug, Clone)]
pub struct DensityRatioModel {
    map: FeatureMap,
    coef: Vec<f64>,
    log_prior: f64,
    cap: f64,
}

impl DensityRatioModel {
    /// Capped ratio and whether the cap was active.
    pub fn predict_capped(&self, x: &[f64]) -> (f64, bool) {
        let phi = self.map.features(x);
        let logit: f64 = self.coef.iter().zip(&phi).map(|(c, f)| c * f).sum();
        let r = (logit + self.log_prior).exp();
        if r > self.cap {
            (self.cap, true)
        } else {
            (r, false)
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.predict_capped(x).0
    }
}

pub fn fit_density_ratio(source: &[f64], target: &[f64], dim: usize, cap: f64) -> Result<DensityRatioModel> {
    let (n, m) = (source.len() / dim, target.len() / dim);
    if n == 0 || m == 0 {
        return Err(Error::EmptyInput("density ratio samples"));
    }
    if !(cap > 0.0) {
        return Err(Error::invalid("ratio cap must be positive"));
    }
    let pooled: Vec<f64> = source.iter().chain(target).copied().collect();
    let map = FeatureMap::fit(BasisSpec::Polynomial { degree: 2 }, &pooled, dim)?;
    let p = map.len();
    let design = map.design(&pooled);
    let labels: Vec<f64> = (0..n + m).map(|i| if i < n { 0.0 } else { 1.0 }).collect();
    let ridge = 1e-4 * (n + m) as f64;

    let objective = |c: &[f64]| -> f64 {
        let mut s = 0.0;
        for (row, &y) in design.chunks_exact(p).zip(&labels) {
            let z: f64 = row.iter().zip(c).map(|(a, b)| a * b).sum();
            // log(1 + e^z) − y·z, evaluated stably.
            s += z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
        }
        s + 0.5 * ridge * c.iter().map(|v| v * v).sum::<f64>()
    };
    let mut coef = vec![0.0; p];
    let mut value = objective(&coef);
    for _ in 0..50 {
        let mut grad = DVector::<f64>::zeros(p);
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for (row, &y) in design.chunks_exact(p).zip(&labels) {
            let z: f64 = row.iter().zip(&coef).map(|(a, b)| a * b).sum();
            let q = 1.0 / (1.0 + (-z).exp());
            let w = q * (1.0 - q);
            for j in 0..p {
                grad[j] += (q - y) * row[j];
                for k in 0..p {
                    hess[(j, k)] += w * row[j] * row[k];
                }
            }
        }
        for j in 0..p {
            grad[j] += ridge * coef[j];
            hess[(j, j)] += ridge;
        }
        let Some(chol) = hess.cholesky() else { break };
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut gain = 0.0;
        for _ in 0..30 {
            let trial: Vec<f64> = coef.iter().zip(step.iter()).map(|(c, s)| c - t * s).collect();
            let v = objective(&trial);
            if v <= value {
                gain = value - v;
                coef = trial;
                value = v;
                break;
            }
            t *= 0.5;
        }
        if gain <= 1e-12 * (1.0 + value.abs()) {
            break;
        }
    }
    Ok(DensityRatioModel {
        map,
        coef,
        log_prior: (n as f64 / m as f64).ln(),
        cap,
    })
}

/// Cross-fitted robust value of `policy` for covariates distributed like
/// `target` (row-major, same dimension as `data`).
pub fn estimate_policy_value_with_covariate_shift(
    data: &Dataset,
    target: &[f64],
    ratio: &RatioSource,
    policy: &dyn Policy,
    delta: RadiusDelta<f64>,
    cfg: &EstimatorConfig,
) -> Result<RobustValueReport> {
    let dim = data.dim();
    if target.is_empty() || target.len() % dim != 0 {
        return Err(Error::EmptyInput("target covariates"));
    }
    let m = target.len() / dim;
    let nu = fit_policy_nuisances(data, policy, delta, cfg)?;
    let k_total = nu.plan.num_folds();
    let tplan = make_folds(m, k_total, rng::derive(cfg.seed, &[stream::RATIO]))?;
    let gather = |idx: &[usize], x: &[f64]| -> Vec<f64> { idx.iter().flat_map(|&i| x[i * dim..(i + 1) * dim].to_vec()).collect() };

    let mut per_fold = Vec::with_capacity(k_total);
    let mut source_terms = vec![0.0; data.len()];
    let mut target_terms = vec![0.0; m];
    let mut capped = 0usize;
    for (k, fold) in nu.folds.iter().enumerate() {
        let nf = nu.plan.nuisance_fold(k);
        let ratio_fn: Box<dyn Fn(&[f64]) -> (f64, bool)> = match ratio {
            RatioSource::Known(f) => {
                let f = f.clone();
                let cap = cfg.ratio_cap;
                Box::new(move |x| {
                    let r = f(x);
                    if r > cap {
                        (cap, true)
                    } else {
                        (r, false)
                    }
                })
            }
            RatioSource::Classifier => {
                let src = gather(&nu.plan.indices(nf), data.covariates());
                let tgt = gather(&tplan.indices(nf), target);
                let model = fit_density_ratio(&src, &tgt, dim, cfg.ratio_cap)?;
                Box::new(move |x| model.predict_capped(x))
            }
        };
        let idx = nu.plan.indices(k);
        let mut s_sum = 0.0;
        for &i in &idx {
            let x = data.row(i);
            let term = if policy.action(x) == data.action(i) {
                let (r, c) = ratio_fn(x);
                capped += usize::from(c);
                let prob = fold.propensity.prob(x, data.action(i));
                r * (g_hat_target(x, data.reward(i), &fold.field, delta) - fold.regression.predict(x)) / prob
            } else {
                0.0
            };
            source_terms[i] = term;
            s_sum += term;
        }
        let tidx = tplan.indices(k);
        let mut t_sum = 0.0;
        for &j in &tidx {
            let g = fold.regression.predict(&target[j * dim..(j + 1) * dim]);
            target_terms[j] = g;
            t_sum += g;
        }
        per_fold.push(s_sum / idx.len() as f64 + t_sum / tidx.len() as f64);
    }
    if capped > 0 {
        warn!("{capped} density ratios clipped at {}", cfg.ratio_cap);
    }
    let var = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)
    };
    let std_error = (var(&source_terms) / data.len() as f64 + var(&target_terms) / m as f64).sqrt();
    let k = per_fold.len() as f64;
    Ok(RobustValueReport {
        estimate: -(per_fold.iter().sum::<f64>() / k),
        per_fold,
        std_error,
        n: data.len(),
        delta: delta.get(),
        diagnostics: Diagnostics {
            field_rows: nu.folds.iter().map(|f| f.field.samples()).collect(),
            regression_rows: nu.folds.iter().map(|f| f.regression_rows).collect(),
            field_risk: nu.folds.iter().map(|f| f.field.risk()).collect(),
            solver_steps: nu.folds.iter().map(|f| f.field.risk_trace().len().saturating_sub(1)).collect(),
            clip_rate: capped as f64 / data.len() as f64,
            in_sample: false,
        },
    })
}
