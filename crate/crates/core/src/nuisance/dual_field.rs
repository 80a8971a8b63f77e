//! Context-dependent dual parameters `θ(x) = (α(x), η(x))` fitted by sieve ERM.
//!
//! Both components are linear in a basis `φ(x)`:
//! `α(x) = clamp(⟨c_α, φ(x)⟩, α_floor, α_max)` and `η(x) = ⟨c_η, φ(x)⟩`.
//! The empirical risk is the mean dual loss over the selected rows. It is
//! convex in the coefficients wherever the clamp is inactive, and the per-row
//! Hessian is rank one, so a damped Newton (Levenberg-Marquardt) iteration
//! converges in a handful of steps. Nelder-Mead over the coefficients is kept
//! as an alternative optimiser.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::basis::{BasisSpec, FeatureMap};
use crate::data::Dataset;
use crate::dual::{self, loss_unchecked, DualParams, RadiusDelta, SolverConfig, DEFAULT_ALPHA_FLOOR, DEFAULT_ALPHA_MAX};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::policy::Policy;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldOptimizer {
    Newton,
    NelderMead { restarts: usize, max_iterations: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualFieldConfig {
    pub alpha_floor: f64,
    pub alpha_max: f64,
    pub min_samples: usize,
    pub optimizer: FieldOptimizer,
    pub max_iterations: usize,
    /// Relative decrease of the empirical risk below which Newton stops.
    pub tolerance: f64,
    /// Minimum training rows per fitted coefficient; richer bases are
    /// shrunk until this holds. Zero disables shrinking.
    pub rows_per_coefficient: usize,
    /// The fitted `α(x)` is also floored at this fraction of the
    /// constant-basis `α` on the same rows.
    pub relative_alpha_floor: f64,
}

impl Default for DualFieldConfig {
    fn default() -> Self {
        Self {
            alpha_floor: DEFAULT_ALPHA_FLOOR,
            alpha_max: DEFAULT_ALPHA_MAX,
            min_samples: 10,
            optimizer: FieldOptimizer::Newton,
            max_iterations: 100,
            tolerance: 1e-12,
            rows_per_coefficient: 20,
            relative_alpha_floor: 0.1,
        }
    }
}

/// Which rows enter the restricted empirical risk.
#[derive(Clone, Copy)]
pub enum Selector<'a> {
    All,
    /// Rows whose logged action equals this action.
    Action(usize),
    /// Rows whose logged action agrees with the policy.
    Policy(&'a dyn Policy),
}

impl Selector<'_> {
    pub fn selects(&self, data: &Dataset, i: usize) -> bool {
        match self {
            Selector::All => true,
            Selector::Action(a) => data.action(i) == *a,
            Selector::Policy(p) => p.action(data.row(i)) == data.action(i),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualFieldModel {
    map: FeatureMap,
    coef_alpha: Vec<f64>,
    coef_eta: Vec<f64>,
    alpha_floor: f64,
    alpha_max: f64,
    /// Mean loss over the training rows at the fitted coefficients.
    risk: f64,
    /// Best-so-far empirical risk after each accepted step or restart.
    risk_trace: Vec<f64>,
    samples: usize,
}

impl DualFieldModel {
    /// A model with hand-set coefficients (no fitting).
    pub fn from_coefficients(map: FeatureMap, coef_alpha: Vec<f64>, coef_eta: Vec<f64>, alpha_floor: f64) -> Result<Self> {
        if coef_alpha.len() != map.len() || coef_eta.len() != map.len() {
            return Err(Error::invalid("coefficient length must match the basis"));
        }
        if !(alpha_floor > 0.0) {
            return Err(Error::invalid("alpha_floor must be positive"));
        }
        Ok(Self {
            map,
            coef_alpha,
            coef_eta,
            alpha_floor,
            alpha_max: f64::INFINITY,
            risk: f64::NAN,
            risk_trace: Vec::new(),
            samples: 0,
        })
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.map
    }

    pub fn coef_alpha(&self) -> &[f64] {
        &self.coef_alpha
    }

    pub fn coef_eta(&self) -> &[f64] {
        &self.coef_eta
    }

    pub fn alpha_floor(&self) -> f64 {
        self.alpha_floor
    }

    pub fn risk(&self) -> f64 {
        self.risk
    }

    pub fn risk_trace(&self) -> &[f64] {
        &self.risk_trace
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    fn params_from_features(&self, phi: &[f64]) -> (f64, f64) {
        let a: f64 = self.coef_alpha.iter().zip(phi).map(|(c, f)| c * f).sum();
        let e: f64 = self.coef_eta.iter().zip(phi).map(|(c, f)| c * f).sum();
        (a.max(self.alpha_floor).min(self.alpha_max), e)
    }

    pub fn eval(&self, x: &[f64]) -> DualParams<f64> {
        let phi = self.map.features(x);
        let (alpha, eta) = self.params_from_features(&phi);
        DualParams { alpha, eta }
    }
}

/// `θ̂(x)`, with `α` floored.
pub fn eval_dual_field(model: &DualFieldModel, x: &[f64]) -> DualParams<f64> {
    model.eval(x)
}

/// `Ĝ(x, y) = ℓ(y; θ̂(x), δ)`.
pub fn g_hat_target(x: &[f64], y: f64, field: &DualFieldModel, delta: RadiusDelta<f64>) -> f64 {
    let th = field.eval(x);
    loss_unchecked(y, th.alpha, th.shift(), delta.get())
}

/// Fit the field on the rows of `data` picked by `selector`.
pub fn fit_dual_field(
    data: &Dataset,
    selector: Selector<'_>,
    delta: RadiusDelta<f64>,
    basis: BasisSpec,
    cfg: &DualFieldConfig,
) -> Result<DualFieldModel> {
    let dim = data.dim();
    let mut x = Vec::new();
    let mut ys = Vec::new();
    for i in 0..data.len() {
        if selector.selects(data, i) {
            x.extend_from_slice(data.row(i));
            ys.push(data.reward(i));
        }
    }
    fit_dual_field_xy(&x, dim, &ys, delta, basis, cfg)
}

/// Fit the field on explicit `(x, y)` rows (row-major `x`).
pub fn fit_dual_field_xy(
    x: &[f64],
    dim: usize,
    ys: &[f64],
    delta: RadiusDelta<f64>,
    basis: BasisSpec,
    cfg: &DualFieldConfig,
) -> Result<DualFieldModel> {
    let n = ys.len();
    if n < cfg.min_samples.max(1) {
        return Err(Error::InsufficientSamples {
            context: "dual field training set".into(),
            got: n,
            need: cfg.min_samples.max(1),
        });
    }
    if !(cfg.alpha_floor > 0.0 && cfg.alpha_max > cfg.alpha_floor) {
        return Err(Error::invalid("alpha bounds must satisfy 0 < floor < max"));
    }
    let map = FeatureMap::fit(shrink_basis(basis, dim, n, cfg.rows_per_coefficient), x, dim)?;
    let p = map.len();
    let design = map.design(x);

    let solver_cfg = SolverConfig {
        alpha_floor: cfg.alpha_floor,
        alpha_max: cfg.alpha_max,
        ..SolverConfig::default()
    };
    let (theta0, _) = dual::solve_dual(ys, &vec![1.0; n], delta, &solver_cfg)?;
    if !(0.0..1.0).contains(&cfg.relative_alpha_floor) {
        return Err(Error::invalid("relative_alpha_floor must lie in [0, 1)"));
    }
    let floor = cfg.alpha_floor.max(cfg.relative_alpha_floor * theta0.alpha);
    let mut coef = vec![0.0; 2 * p];
    coef[0] = theta0.alpha;
    coef[p] = theta0.eta;

    let problem = Problem {
        design: &design,
        ys,
        p,
        delta: delta.get(),
        floor,
        cap: cfg.alpha_max,
    };
    let mut trace = vec![problem.risk(&coef)];
    let coef = match cfg.optimizer {
        FieldOptimizer::Newton => problem.newton(coef, cfg, &mut trace),
        FieldOptimizer::NelderMead {
            restarts,
            max_iterations,
        } => problem.nelder_mead(coef, restarts, max_iterations, cfg.tolerance, &mut trace),
    };
    let risk = problem.risk(&coef);
    let (coef_alpha, coef_eta) = (coef[..p].to_vec(), coef[p..].to_vec());
    Ok(DualFieldModel {
        map,
        coef_alpha,
        coef_eta,
        alpha_floor: floor,
        alpha_max: cfg.alpha_max,
        risk,
        risk_trace: trace,
        samples: n,
    })
}

/// Step down `spline(k) -> spline(k/2) -> ... -> spline(0) -> linear ->
/// constant` (or lower polynomial degrees) until the field's `2p`
/// coefficients have at least `rows_per_coefficient` rows each. An
/// over-rich sieve drives `α` to its floor on a few rows, which makes the
/// loss overflow out of sample.
pub fn shrink_basis(spec: BasisSpec, dim: usize, rows: usize, rows_per_coefficient: usize) -> BasisSpec {
    let fits = |s: BasisSpec| {
        let p = FeatureMap::raw_len(s, dim);
        rows >= 2 * p * rows_per_coefficient
    };
    let mut s = spec;
    loop {
        if rows_per_coefficient == 0 || fits(s) {
            return s;
        }
        s = match s {
            BasisSpec::AdditiveSpline { knots: 0 } => BasisSpec::Polynomial { degree: 1 },
            BasisSpec::AdditiveSpline { knots } => BasisSpec::AdditiveSpline { knots: knots / 2 },
            BasisSpec::Polynomial { degree: 0 } => return s,
            BasisSpec::Polynomial { degree } => BasisSpec::Polynomial { degree: degree - 1 },
        };
    }
}

struct Problem<'a> {
    design: &'a [f64],
    ys: &'a [f64],
    p: usize,
    delta: f64,
    floor: f64,
    cap: f64,
}

impl Problem<'_> {
    fn row_params(&self, i: usize, coef: &[f64]) -> (f64, bool, f64) {
        let phi = &self.design[i * self.p..(i + 1) * self.p];
        let a: f64 = coef[..self.p].iter().zip(phi).map(|(c, f)| c * f).sum();
        let e: f64 = coef[self.p..].iter().zip(phi).map(|(c, f)| c * f).sum();
        let active = a > self.floor && a < self.cap;
        (a.max(self.floor).min(self.cap), active, e)
    }

    fn risk(&self, coef: &[f64]) -> f64 {
        let n = self.ys.len();
        let mut s = 0.0;
        for (i, &y) in self.ys.iter().enumerate() {
            let (alpha, _, eta) = self.row_params(i, coef);
            s += loss_unchecked(y, alpha, eta + alpha, self.delta);
        }
        let r = s / n as f64;
        if r.is_finite() {
            r
        } else {
            f64::INFINITY
        }
    }

    /// Gradient and Gauss-Newton-exact Hessian (the per-row Hessian in
    /// `(α, η)` is `(e^u/α)·[[(u+1)², u+1], [u+1, 1]]`).
    fn grad_hess(&self, coef: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let (n, p) = (self.ys.len(), self.p);
        let mut grad = DVector::zeros(2 * p);
        let mut rows = DMatrix::zeros(n, 2 * p);
        for (i, &y) in self.ys.iter().enumerate() {
            let phi = &self.design[i * p..(i + 1) * p];
            let (alpha, active, eta) = self.row_params(i, coef);
            let u = -(y + eta + alpha) / alpha;
            let e = u.exp();
            let d_alpha = if active { -u * e + self.delta } else { 0.0 };
            let d_eta = -u.exp_m1();
            let c = (e / alpha).sqrt();
            let va = if active { c * (u + 1.0) } else { 0.0 };
            for (j, &f) in phi.iter().enumerate() {
                grad[j] += d_alpha * f;
                grad[p + j] += d_eta * f;
                rows[(i, j)] = va * f;
                rows[(i, p + j)] = c * f;
            }
        }
        let inv = 1.0 / n as f64;
        grad *= inv;
        let mut hess = rows.tr_mul(&rows);
        hess *= inv;
        (grad, hess)
    }

    fn newton(&self, mut coef: Vec<f64>, cfg: &DualFieldConfig, trace: &mut Vec<f64>) -> Vec<f64> {
        let dimc = coef.len();
        let mut value = self.risk(&coef);
        let mut lambda = 1e-3;
        for _ in 0..cfg.max_iterations {
            let (grad, hess) = self.grad_hess(&coef);
            let scale = (0..dimc).map(|k| hess[(k, k)]).fold(0.0, f64::max).max(1e-12);
            let mut accepted = false;
            while lambda < 1e12 {
                let mut h = hess.clone();
                for k in 0..dimc {
                    h[(k, k)] += lambda * (hess[(k, k)] + 1e-9 * scale) + 1e-14 * scale;
                }
                let Some(chol) = h.cholesky() else {
                    lambda *= 4.0;
                    continue;
                };
                let step = chol.solve(&grad);
                let trial: Vec<f64> = coef.iter().zip(step.iter()).map(|(c, s)| c - s).collect();
                let v = self.risk(&trial);
                if v < value {
                    let gain = value - v;
                    coef = trial;
                    value = v;
                    trace.push(value);
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = gain > cfg.tolerance * (1.0 + value.abs());
                    break;
                }
                lambda *= 4.0;
            }
            if !accepted {
                break;
            }
        }
        coef
    }

    fn nelder_mead(&self, start: Vec<f64>, restarts: usize, max_iterations: usize, tol: f64, trace: &mut Vec<f64>) -> Vec<f64> {
        let mut best = start;
        let mut best_value = self.risk(&best);
        for r in 0..restarts.max(1) {
            let step = 0.5f64.powi(r as i32);
            let initial_step = best.iter().map(|c| step * c.abs().max(0.1)).collect();
            let opts = NelderMeadOptions {
                max_iterations,
                tolerance: tol.max(1e-10),
                initial_step,
                bounds: None,
            };
            let res = nelder_mead(|c: &[f64]| self.risk(c), &best, &opts);
            if res.value < best_value {
                best_value = res.value;
                best = res.x;
            }
            trace.push(best_value);
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(d: f64) -> RadiusDelta<f64> {
        RadiusDelta::new(d).unwrap()
    }

    #[test]
    fn zero_alpha_coefficients_hit_the_floor() {
        let map = FeatureMap::raw(BasisSpec::Polynomial { degree: 1 }, 2).unwrap();
        let m = DualFieldModel::from_coefficients(map, vec![0.0; 3], vec![1.0, 2.0, 3.0], 1e-3).unwrap();
        let th = m.eval(&[0.5, -1.0]);
        assert_eq!(th.alpha, 1e-3);
        assert_eq!(th.eta, 1.0 + 1.0 - 3.0);
    }

    #[test]
    fn target_composes_loss_and_field() {
        let map = FeatureMap::raw(BasisSpec::constant(), 1).unwrap();
        let m = DualFieldModel::from_coefficients(map, vec![1.0], vec![0.0], 1e-3).unwrap();
        let v = g_hat_target(&[3.0], 1.0, &m, r(0.1));
        assert!((v - 0.235_335_283_236_612_7).abs() < 1e-15);
        let exact = dual::loss(1.0, m.eval(&[3.0]), r(0.1)).unwrap();
        assert_eq!(v, exact);
    }

    #[test]
    fn constant_basis_matches_scalar_dual() {
        let ys: Vec<f64> = (0..60).map(|i| ((i * 37 % 11) as f64) / 10.0).collect();
        let x: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let cfg = DualFieldConfig::default();
        let m = fit_dual_field_xy(&x, 1, &ys, r(0.2), BasisSpec::constant(), &cfg).unwrap();
        let (_, v) = dual::solve_dual(&ys, &vec![1.0; 60], r(0.2), &SolverConfig::default()).unwrap();
        assert!((m.risk() - v).abs() < 1e-6, "{} vs {}", m.risk(), v);
    }

    #[test]
    fn basis_shrinks_with_few_rows() {
        let spline = BasisSpec::AdditiveSpline { knots: 4 };
        assert_eq!(shrink_basis(spline, 1, 1000, 5), spline);
        assert_eq!(shrink_basis(spline, 1, 50, 5), BasisSpec::AdditiveSpline { knots: 1 });
        assert_eq!(shrink_basis(spline, 1, 33, 5), BasisSpec::Polynomial { degree: 1 });
        assert_eq!(shrink_basis(spline, 1, 5, 5), BasisSpec::constant());
        assert_eq!(shrink_basis(spline, 1, 5, 0), spline);
    }

    #[test]
    fn too_few_rows() {
        let err = fit_dual_field_xy(&[0.0; 3], 1, &[1.0; 3], r(0.1), BasisSpec::constant(), &DualFieldConfig::default())
            .unwrap_err();
        assert!(err.to_string().contains("insufficient on-policy samples"));
    }

    #[test]
    fn risk_trace_never_increases() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 / 200.0).collect();
        let ys: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + ((i * 7919) % 13) as f64 / 13.0).collect();
        for optimizer in [
            FieldOptimizer::Newton,
            FieldOptimizer::NelderMead {
                restarts: 3,
                max_iterations: 400,
            },
        ] {
            let cfg = DualFieldConfig {
                optimizer,
                ..DualFieldConfig::default()
            };
            let m = fit_dual_field_xy(&x, 1, &ys, r(0.1), BasisSpec::Polynomial { degree: 1 }, &cfg).unwrap();
            assert!(m.risk_trace().windows(2).all(|w| w[1] <= w[0]));
            assert_eq!(*m.risk_trace().last().unwrap(), m.risk());
        }
    }
}
