//! The KL dual of the conditional worst-case mean.
//!
//! For a reward law `P` and radius `δ`,
//!
//! ```text
//! inf_{Q: KL(Q||P) <= δ} E_Q[Y] = -min_{α >= 0, η} E_P[ α·exp(-(Y+η)/α - 1) + η + α·δ ]
//! ```
//!
//! [`loss`] is the integrand, [`solve_dual`] minimises its weighted empirical
//! mean, and the functions in [`oracle`] solve the primal directly for finite
//! supports so the two routes can certify each other.
//!
//! Numerically the loss is evaluated through the shifted intercept
//! `s = η + α`, which turns it into `α·expm1(-(y+s)/α) + s + α·δ`. The two
//! forms are algebraically identical; the shifted one stays accurate when `α`
//! is large (small radii, where the optimum drifts toward `α → ∞`).

mod oracle;
mod solver;

pub use oracle::{bernoulli_kl, bernoulli_worst_mean, worst_case_mean_discrete};
pub use solver::{solve_dual, solve_dual_with_report, DualSolution, SolverConfig};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Default lower bound on `α` used throughout.
pub const DEFAULT_ALPHA_FLOOR: f64 = 1e-3;
/// Default upper cap on `α`; large enough that the zero-radius limit is
/// reproduced to ~1e-7 for unit-scale rewards.
pub const DEFAULT_ALPHA_MAX: f64 = 1e6;

/// Dual variables `θ = (α, η)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualParams<F> {
    pub alpha: F,
    pub eta: F,
}

impl<F: Scalar> DualParams<F> {
    pub fn new(alpha: F, eta: F) -> Result<Self> {
        if !alpha.is_finite() || !eta.is_finite() {
            return Err(Error::NonFinite("dual parameters"));
        }
        if alpha <= F::zero() {
            return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { alpha, eta })
    }

    /// Build from `α` and the shifted intercept `s = η + α`.
    pub fn from_shift(alpha: F, shift: F) -> Self {
        Self { alpha, eta: shift - alpha }
    }

    /// The shifted intercept `η + α`.
    pub fn shift(&self) -> F {
        self.eta + self.alpha
    }
}

/// KL radius `δ ≥ 0` (nats).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RadiusDelta<F>(F);

impl<F: Scalar> RadiusDelta<F> {
    pub fn new(delta: F) -> Result<Self> {
        if !delta.is_finite() {
            return Err(Error::NonFinite("radius"));
        }
        if delta < F::zero() {
            return Err(Error::invalid(format!("radius must be non-negative, got {delta}")));
        }
        Ok(Self(delta))
    }

    pub fn zero() -> Self {
        Self(F::zero())
    }

    pub fn get(self) -> F {
        self.0
    }
}

/// Finite-support distribution used by the primal oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist<F> {
    values: Vec<F>,
    probs: Vec<F>,
}

impl<F: Scalar> DiscreteDist<F> {
    pub fn new(values: Vec<F>, probs: Vec<F>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("distribution support"));
        }
        if values.len() != probs.len() {
            return Err(Error::invalid("values and probs lengths differ"));
        }
        if values.iter().chain(&probs).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("distribution"));
        }
        if probs.iter().any(|&p| p < F::zero()) {
            return Err(Error::invalid("negative probability"));
        }
        let total = probs.iter().fold(F::zero(), |a, &b| a + b);
        let tol = F::lit(1e-12).max(F::epsilon() * F::lit(16.0));
        if (total - F::one()).abs() > tol {
            return Err(Error::invalid(format!("probabilities sum to {total}, expected 1")));
        }
        Ok(Self { values, probs })
    }

    /// Uniform weights over the given sample.
    pub fn empirical(values: Vec<F>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("distribution support"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("distribution"));
        }
        // Built directly: 1/n summed n times can miss 1 by a few ulps.
        let n = F::from_usize(values.len()).unwrap();
        let probs = vec![F::one() / n; values.len()];
        Ok(Self { values, probs })
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn probs(&self) -> &[F] {
        &self.probs
    }

    pub fn mean(&self) -> F {
        self.values
            .iter()
            .zip(&self.probs)
            .fold(F::zero(), |acc, (&v, &p)| acc + v * p)
    }

    /// Smallest support point carrying positive mass.
    pub fn ess_inf(&self) -> F {
        self.values
            .iter()
            .zip(&self.probs)
            .filter(|(_, &p)| p > F::zero())
            .map(|(&v, _)| v)
            .fold(F::infinity(), F::min)
    }

    /// Total probability sitting exactly at the essential infimum.
    pub fn mass_at_ess_inf(&self) -> F {
        let lo = self.ess_inf();
        self.values
            .iter()
            .zip(&self.probs)
            .filter(|(&v, _)| v == lo)
            .fold(F::zero(), |acc, (_, &p)| acc + p)
    }

    /// Largest radius for which the worst case is still above the essential
    /// infimum: `-ln(mass at ess-inf)`.
    pub fn delta_max(&self) -> F {
        -self.mass_at_ess_inf().ln()
    }
}

fn check_finite<F: Scalar>(y: F, theta: &DualParams<F>, delta: RadiusDelta<F>) -> Result<()> {
    if !y.is_finite() || !theta.alpha.is_finite() || !theta.eta.is_finite() || !delta.get().is_finite() {
        return Err(Error::NonFinite("non-finite operand"));
    }
    if theta.alpha <= F::zero() {
        return Err(Error::invalid(format!("alpha must be positive, got {}", theta.alpha)));
    }
    Ok(())
}

/// `ℓ(y; α, η) = α·exp(-(y+η)/α - 1) + η + α·δ`.
pub fn loss<F: Scalar>(y: F, theta: DualParams<F>, delta: RadiusDelta<F>) -> Result<F> {
    check_finite(y, &theta, delta)?;
    Ok(loss_unchecked(y, theta.alpha, theta.shift(), delta.get()))
}

/// Loss in shifted coordinates without validation; `alpha > 0` is assumed.
#[inline]
pub(crate) fn loss_unchecked<F: Scalar>(y: F, alpha: F, shift: F, delta: F) -> F {
    let u = -(y + shift) / alpha;
    alpha * u.exp_m1() + shift + alpha * delta
}

/// Partial derivatives `(∂ℓ/∂α, ∂ℓ/∂η)`:
///
/// ```text
/// ∂ℓ/∂α = (1 + (y+η)/α)·exp(-(y+η)/α - 1) + δ
/// ∂ℓ/∂η = 1 - exp(-(y+η)/α - 1)
/// ```
pub fn loss_grad<F: Scalar>(y: F, theta: DualParams<F>, delta: RadiusDelta<F>) -> Result<(F, F)> {
    check_finite(y, &theta, delta)?;
    // With u = -(y+s)/α the exponent -(y+η)/α - 1 equals u and 1 + (y+η)/α = -u.
    let u = -(y + theta.shift()) / theta.alpha;
    let e = u.exp();
    Ok((-u * e + delta.get(), -u.exp_m1()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn th(a: f64, e: f64) -> DualParams<f64> {
        DualParams::new(a, e).unwrap()
    }

    #[test]
    fn loss_vanishes_at_stationary_eta() {
        let v = loss(0.0, th(1.0, -1.0), RadiusDelta::zero()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn loss_closed_form_value() {
        // e^-2 + 0.1
        let v = loss(1.0, th(1.0, 0.0), RadiusDelta::new(0.1).unwrap()).unwrap();
        assert!((v - 0.235_335_283_236_612_7).abs() < 1e-15, "{v}");
    }

    #[test]
    fn stationary_eta_identity() {
        for &(alpha, c) in &[(0.3, 0.7), (2.0, -1.5), (10.0, 4.0), (0.001, 0.25)] {
            let v = loss(c, th(alpha, -c - alpha), RadiusDelta::zero()).unwrap();
            assert!((v + c).abs() < 1e-12, "alpha={alpha} c={c} v={v}");
        }
    }

    #[test]
    fn grad_trivial_points() {
        let (_, d_eta) = loss_grad(0.0, th(1.0, -1.0), RadiusDelta::zero()).unwrap();
        assert_eq!(d_eta, 0.0);
        let (d_alpha, _) = loss_grad(0.0, th(1.0, -1.0), RadiusDelta::new(0.3).unwrap()).unwrap();
        assert!((d_alpha - 0.3).abs() < 1e-15);
    }

    #[test]
    fn non_finite_rejected() {
        let err = loss(f64::NAN, th(1.0, 0.0), RadiusDelta::zero()).unwrap_err();
        assert!(err.to_string().contains("non-finite operand"));
        assert!(loss_grad(f64::INFINITY, th(1.0, 0.0), RadiusDelta::zero()).is_err());
        assert!(DualParams::new(0.0, 1.0).is_err());
        assert!(RadiusDelta::new(-0.1).is_err());
    }

    #[test]
    fn single_precision_loss() {
        let v = loss(1.0f32, DualParams::new(1.0f32, 0.0).unwrap(), RadiusDelta::new(0.1f32).unwrap()).unwrap();
        assert!((v - 0.235_335_28f32).abs() < 1e-6);
    }

    #[test]
    fn discrete_dist_validation() {
        assert!(DiscreteDist::new(vec![0.0, 1.0], vec![0.5, 0.4]).is_err());
        assert!(DiscreteDist::new(vec![0.0], vec![1.0, 0.0]).is_err());
        assert!(DiscreteDist::<f64>::new(vec![], vec![]).is_err());
        let d = DiscreteDist::new(vec![1.0, 0.0, 0.0], vec![0.5, 0.25, 0.25]).unwrap();
        assert_eq!(d.ess_inf(), 0.0);
        assert!((d.mass_at_ess_inf() - 0.5f64).abs() < 1e-15);
    }
}
