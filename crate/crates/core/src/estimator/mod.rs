//! Cross-fitted doubly-robust estimation of the robust policy value.
//!
//! For evaluation fold `k`, the propensity and dual field are trained on fold
//! `k+1`, the regression `ĝ` on fold `k+2`, and the fold value is
//!
//! ```text
//! V̂⁽ᵏ⁾ = mean over fold k of  1{π(X)=A}/π̂₀(A|X) · (Ĝ(X,Y) − ĝ(X)) + ĝ(X)
//! ```
//!
//! with `Ĝ(x,y) = ℓ(y; θ̂(x), δ)`. The loss is a negated value, so the
//! reported estimate is `−mean_k V̂⁽ᵏ⁾`.

mod covariate_shift;
mod folds;

pub use covariate_shift::{estimate_policy_value_with_covariate_shift, fit_density_ratio, DensityRatioModel, RatioSource};
pub use folds::{make_folds, FoldPlan, MIN_FOLDS};

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dual::RadiusDelta;
use crate::nuisance::{
    fit_dual_field, fit_propensity, fit_regression, g_hat_target, regression_targets, BasisSpec, DualFieldConfig,
    DualFieldModel, PropensityConfig, PropensityModel, RegressionConfig, RegressionModel, Selector,
};
use crate::policy::Policy;
use crate::rng::{self, stream};
use crate::{Error, Result};

/// A logging propensity supplied by the caller: `(x, a) ↦ π₀(a|x)`.
#[derive(Clone)]
pub struct KnownPropensity(pub Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>);

impl fmt::Debug for KnownPropensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("KnownPropensity(..)")
    }
}

#[derive(Debug, Clone)]
pub enum PropensitySource {
    Fit(PropensityConfig),
    Known(KnownPropensity),
}

impl PropensitySource {
    /// The uniform logging policy over `m` actions.
    pub fn uniform(m: usize) -> Self {
        let p = 1.0 / m as f64;
        PropensitySource::Known(KnownPropensity(Arc::new(move |_, _| p)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegressionSource {
    Fit(RegressionConfig),
    /// `ĝ ≡ 0`, which reduces the estimator to pure inverse weighting.
    Zero,
}

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub folds: usize,
    pub seed: u64,
    /// `None` picks [`BasisSpec::default_for_dim`].
    pub basis: Option<BasisSpec>,
    pub dual_field: DualFieldConfig,
    pub propensity: PropensitySource,
    pub regression: RegressionSource,
    /// Upper cap on estimated covariate density ratios.
    pub ratio_cap: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            folds: 3,
            seed: 0,
            basis: None,
            dual_field: DualFieldConfig::default(),
            propensity: PropensitySource::Fit(PropensityConfig::default()),
            regression: RegressionSource::Fit(RegressionConfig::default()),
            ratio_cap: 20.0,
        }
    }
}

impl EstimatorConfig {
    pub fn basis_for(&self, dim: usize) -> BasisSpec {
        self.basis.unwrap_or_else(|| BasisSpec::default_for_dim(dim))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Rows used to fit each fold's dual field.
    pub field_rows: Vec<usize>,
    /// Rows used to fit each fold's regression.
    pub regression_rows: Vec<usize>,
    /// Final empirical risk of each fold's dual field.
    pub field_risk: Vec<f64>,
    /// Accepted optimiser steps (or restarts) per fold.
    pub solver_steps: Vec<usize>,
    /// Fraction of matched evaluation rows whose propensity sits at the floor.
    pub clip_rate: f64,
    /// True when the value is computed on the same rows that chose the policy.
    pub in_sample: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustValueReport {
    pub estimate: f64,
    pub per_fold: Vec<f64>,
    pub std_error: f64,
    pub n: usize,
    pub delta: f64,
    pub diagnostics: Diagnostics,
}

impl RobustValueReport {
    /// Normal-approximation interval `estimate ± z·std_error`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.estimate - z * self.std_error, self.estimate + z * self.std_error)
    }

    /// Assemble a report from fold values and per-row influence values.
    pub(crate) fn from_parts(per_fold: Vec<f64>, influence: &[f64], delta: f64, diagnostics: Diagnostics) -> Self {
        let k = per_fold.len() as f64;
        let estimate = -(per_fold.iter().sum::<f64>() / k);
        Self {
            estimate,
            per_fold,
            std_error: standard_error(influence),
            n: influence.len(),
            delta,
            diagnostics,
        }
    }
}

/// Sample standard deviation divided by `√n`.
pub fn standard_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// A propensity that is either fitted or supplied.
#[derive(Debug, Clone)]
pub enum FoldPropensity {
    Fitted(PropensityModel),
    Known(KnownPropensity),
}

impl FoldPropensity {
    pub fn prob(&self, x: &[f64], a: usize) -> f64 {
        match self {
            FoldPropensity::Fitted(m) => m.predict(x, a),
            FoldPropensity::Known(k) => (k.0)(x, a),
        }
    }

    pub fn clip_floor(&self) -> Option<f64> {
        match self {
            FoldPropensity::Fitted(m) => Some(m.clip_floor()),
            FoldPropensity::Known(_) => None,
        }
    }

    pub(crate) fn fit(source: &PropensitySource, train: &Dataset, seed: u64, fold: usize) -> Result<Self> {
        Ok(match source {
            PropensitySource::Known(k) => FoldPropensity::Known(k.clone()),
            PropensitySource::Fit(cfg) => FoldPropensity::Fitted(fit_propensity(
                train,
                cfg,
                rng::derive(seed, &[stream::PROPENSITY, fold as u64]),
            )?),
        })
    }
}

/// Fit `ĝ` on `(x, target)` rows, or return the zero model.
pub(crate) fn fit_fold_regression(
    source: RegressionSource,
    x: &[f64],
    dim: usize,
    targets: &[f64],
    seed: u64,
    path: &[u64],
) -> Result<RegressionModel> {
    match source {
        RegressionSource::Zero => Ok(RegressionModel::constant(dim, 0.0)),
        RegressionSource::Fit(cfg) => {
            let mut p = vec![stream::REGRESSION];
            p.extend_from_slice(path);
            fit_regression(x, dim, targets, &cfg, rng::derive(seed, &p))
        }
    }
}

/// Attach fold context to an insufficient-sample error.
pub(crate) fn in_fold(err: Error, what: &str, fold: usize, eval_fold: usize) -> Error {
    match err {
        Error::InsufficientSamples { got, need, .. } => Error::InsufficientSamples {
            context: format!("fold {} ({what} for evaluation fold {})", fold + 1, eval_fold + 1),
            got,
            need,
        },
        e => e,
    }
}

/// Nuisances of one evaluation fold for a fixed policy.
#[derive(Debug, Clone)]
pub struct FoldNuisances {
    pub propensity: FoldPropensity,
    pub field: DualFieldModel,
    pub regression: RegressionModel,
    /// Radius at which `field` and `regression` were fitted.
    pub delta: f64,
    pub regression_rows: usize,
}

impl FoldNuisances {
    /// `ĝ` at radius `delta`: the fitted regression plus the exact `α̂(x)·Δδ`
    /// term contributed by the loss's radius penalty.
    pub fn g_hat(&self, x: &[f64], delta: f64) -> f64 {
        let base = self.regression.predict(x);
        if delta == self.delta {
            base
        } else {
            base + self.field.eval(x).alpha * (delta - self.delta)
        }
    }
}

/// Cross-fitted nuisances for one policy, reusable across radii.
#[derive(Debug, Clone)]
pub struct PolicyNuisances {
    pub plan: FoldPlan,
    pub folds: Vec<FoldNuisances>,
}

pub fn fit_policy_nuisances(
    data: &Dataset,
    policy: &dyn Policy,
    delta: RadiusDelta<f64>,
    cfg: &EstimatorConfig,
) -> Result<PolicyNuisances> {
    let plan = make_folds(data.len(), cfg.folds, cfg.seed)?;
    fit_policy_nuisances_with_plan(data, policy, delta, cfg, plan)
}

pub fn fit_policy_nuisances_with_plan(
    data: &Dataset,
    policy: &dyn Policy,
    delta: RadiusDelta<f64>,
    cfg: &EstimatorConfig,
    plan: FoldPlan,
) -> Result<PolicyNuisances> {
    if data.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    let basis = cfg.basis_for(data.dim());
    let k_total = plan.num_folds();
    let folds = (0..k_total)
        .into_par_iter()
        .map(|k| -> Result<FoldNuisances> {
            let nf = plan.nuisance_fold(k);
            let rf = plan.regression_fold(k);
            let train = data.subset(&plan.indices(nf));
            let propensity = FoldPropensity::fit(&cfg.propensity, &train, cfg.seed, k)?;
            let field = fit_dual_field(&train, Selector::Policy(policy), delta, basis, &cfg.dual_field)
                .map_err(|e| in_fold(e, "dual field", nf, k))?;
            let reg = data.subset(&plan.indices(rf));
            let (x, t) = regression_targets(&reg, Selector::Policy(policy), &field, delta);
            if t.is_empty() {
                return Err(in_fold(
                    Error::InsufficientSamples {
                        context: String::new(),
                        got: 0,
                        need: 1,
                    },
                    "regression",
                    rf,
                    k,
                ));
            }
            let regression = fit_fold_regression(cfg.regression, &x, data.dim(), &t, cfg.seed, &[k as u64])?;
            Ok(FoldNuisances {
                propensity,
                field,
                regression,
                delta: delta.get(),
                regression_rows: t.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PolicyNuisances { plan, folds })
}

/// `1{matched}/π̂·(Ĝ − ĝ) + ĝ`.
#[inline]
pub(crate) fn dr_summand(matched: bool, prob: f64, big_g: f64, g: f64) -> f64 {
    if matched {
        (big_g - g) / prob + g
    } else {
        g
    }
}

impl PolicyNuisances {
    /// Evaluate the estimator at `delta` with these nuisances held fixed.
    pub fn evaluate(&self, data: &Dataset, policy: &dyn Policy, delta: RadiusDelta<f64>) -> RobustValueReport {
        let d = delta.get();
        let mut per_fold = Vec::with_capacity(self.folds.len());
        let mut influence = vec![0.0; data.len()];
        let (mut matched_rows, mut clipped) = (0usize, 0usize);
        for (k, nu) in self.folds.iter().enumerate() {
            let idx = self.plan.indices(k);
            let mut sum = 0.0;
            for &i in &idx {
                let x = data.row(i);
                let matched = policy.action(x) == data.action(i);
                let g = nu.g_hat(x, d);
                let s = if matched {
                    let prob = nu.propensity.prob(x, data.action(i));
                    matched_rows += 1;
                    if nu.propensity.clip_floor() == Some(prob) {
                        clipped += 1;
                    }
                    dr_summand(true, prob, g_hat_target(x, data.reward(i), &nu.field, delta), g)
                } else {
                    g
                };
                sum += s;
                influence[i] = -s;
            }
            per_fold.push(sum / idx.len() as f64);
        }
        let diagnostics = Diagnostics {
            field_rows: self.folds.iter().map(|f| f.field.samples()).collect(),
            regression_rows: self.folds.iter().map(|f| f.regression_rows).collect(),
            field_risk: self.folds.iter().map(|f| f.field.risk()).collect(),
            solver_steps: self.folds.iter().map(|f| f.field.risk_trace().len().saturating_sub(1)).collect(),
            clip_rate: if matched_rows > 0 {
                clipped as f64 / matched_rows as f64
            } else {
                0.0
            },
            in_sample: false,
        };
        RobustValueReport::from_parts(per_fold, &influence, d, diagnostics)
    }
}

/// Cross-fitted doubly-robust estimate of the robust value of `policy`.
pub fn estimate_policy_value(
    data: &Dataset,
    policy: &dyn Policy,
    delta: RadiusDelta<f64>,
    cfg: &EstimatorConfig,
) -> Result<RobustValueReport> {
    let nu = fit_policy_nuisances(data, policy, delta, cfg)?;
    Ok(nu.evaluate(data, policy, delta))
}

/// Estimates over a grid of radii with every nuisance fitted once at
/// `reference`. Only the loss's `α·δ` term moves with the radius, and it is
/// carried exactly into both `Ĝ` and `ĝ`.
pub fn estimate_frozen_grid(
    data: &Dataset,
    policy: &dyn Policy,
    reference: RadiusDelta<f64>,
    grid: &[RadiusDelta<f64>],
    cfg: &EstimatorConfig,
) -> Result<Vec<RobustValueReport>> {
    let nu = fit_policy_nuisances(data, policy, reference, cfg)?;
    Ok(grid.iter().map(|&d| nu.evaluate(data, policy, d)).collect())
}

/// Plain cross-fitted AIPW estimate of `E[Y(π(X))]` (no drift), using the
/// same fold plan and propensity seeds as [`estimate_policy_value`].
pub fn estimate_aipw_value(data: &Dataset, policy: &dyn Policy, cfg: &EstimatorConfig) -> Result<RobustValueReport> {
    let plan = make_folds(data.len(), cfg.folds, cfg.seed)?;
    let k_total = plan.num_folds();
    let mut per_fold = Vec::with_capacity(k_total);
    let mut influence = vec![0.0; data.len()];
    for k in 0..k_total {
        let train = data.subset(&plan.indices(plan.nuisance_fold(k)));
        let propensity = FoldPropensity::fit(&cfg.propensity, &train, cfg.seed, k)?;
        let reg = data.subset(&plan.indices(plan.regression_fold(k)));
        let (mut x, mut t) = (Vec::new(), Vec::new());
        for i in 0..reg.len() {
            if policy.action(reg.row(i)) == reg.action(i) {
                x.extend_from_slice(reg.row(i));
                t.push(reg.reward(i));
            }
        }
        if t.is_empty() {
            return Err(Error::InsufficientSamples {
                context: format!("fold {} (regression for evaluation fold {})", plan.regression_fold(k) + 1, k + 1),
                got: 0,
                need: 1,
            });
        }
        let g_model = fit_fold_regression(cfg.regression, &x, data.dim(), &t, cfg.seed, &[k as u64])?;
        let idx = plan.indices(k);
        let mut sum = 0.0;
        for &i in &idx {
            let xi = data.row(i);
            let matched = policy.action(xi) == data.action(i);
            let prob = if matched { propensity.prob(xi, data.action(i)) } else { 1.0 };
            let s = dr_summand(matched, prob, data.reward(i), g_model.predict(xi));
            sum += s;
            influence[i] = s;
        }
        per_fold.push(sum / idx.len() as f64);
    }
    let mut report = RobustValueReport::from_parts(per_fold, &influence, 0.0, Diagnostics::default());
    // No loss sign flip for the plain value.
    report.estimate = -report.estimate;
    Ok(report)
}
