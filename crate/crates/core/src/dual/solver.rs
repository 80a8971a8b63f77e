use serde::{Deserialize, Serialize};

use super::{loss_unchecked, DualParams, RadiusDelta, DEFAULT_ALPHA_FLOOR, DEFAULT_ALPHA_MAX};
use crate::optim::{nelder_mead, Bounds, NelderMeadOptions};
use crate::{Error, Result, Scalar};

/// Settings for the scalar dual minimisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<F> {
    pub alpha_floor: F,
    pub alpha_max: F,
    /// Box half-width for the shifted intercept `η + α`; `None` uses
    /// `2·(max|y| + 1)`.
    pub eta_bound: Option<F>,
    pub restarts: usize,
    pub tolerance: F,
    pub max_iterations: usize,
}

impl<F: Scalar> Default for SolverConfig<F> {
    fn default() -> Self {
        Self {
            alpha_floor: F::lit(DEFAULT_ALPHA_FLOOR),
            alpha_max: F::lit(DEFAULT_ALPHA_MAX),
            eta_bound: None,
            restarts: 5,
            tolerance: F::lit(1e-9),
            max_iterations: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DualSolution<F> {
    pub params: DualParams<F>,
    /// Attained minimum of the weighted mean loss; the worst-case mean is its
    /// negation.
    pub value: F,
    pub runs: usize,
    pub converged_runs: usize,
}

struct Sample<'a, F> {
    ys: &'a [F],
    weights: Vec<F>,
    lo: F,
}

impl<F: Scalar> Sample<'_, F> {
    fn objective(&self, alpha: F, shift: F, delta: F) -> F {
        self.ys
            .iter()
            .zip(&self.weights)
            .fold(F::zero(), |acc, (&y, &w)| acc + w * loss_unchecked(y, alpha, shift, delta))
    }

    /// `s*(α) = α·ln E_w[exp(-y/α)]`, the exact minimiser over the intercept.
    fn optimal_shift(&self, alpha: F) -> F {
        let z = self
            .ys
            .iter()
            .zip(&self.weights)
            .fold(F::zero(), |acc, (&y, &w)| acc + w * (-(y - self.lo) / alpha).exp());
        -self.lo + alpha * z.ln()
    }
}

/// Minimise the weighted empirical mean of the dual loss over
/// `α ∈ [alpha_floor, alpha_max]` and the intercept box.
///
/// Returns the minimiser and the attained minimum (the negated worst-case
/// mean).
pub fn solve_dual<F: Scalar>(
    ys: &[F],
    weights: &[F],
    delta: RadiusDelta<F>,
    cfg: &SolverConfig<F>,
) -> Result<(DualParams<F>, F)> {
    solve_dual_with_report(ys, weights, delta, cfg).map(|s| (s.params, s.value))
}

pub fn solve_dual_with_report<F: Scalar>(
    ys: &[F],
    weights: &[F],
    delta: RadiusDelta<F>,
    cfg: &SolverConfig<F>,
) -> Result<DualSolution<F>> {
    if ys.is_empty() {
        return Err(Error::EmptyInput("dual sample"));
    }
    if ys.len() != weights.len() {
        return Err(Error::invalid("ys and weights lengths differ"));
    }
    if ys.iter().chain(weights).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("non-finite operand"));
    }
    if weights.iter().any(|&w| w < F::zero()) {
        return Err(Error::invalid("negative weight"));
    }
    let total = weights.iter().fold(F::zero(), |a, &b| a + b);
    if total <= F::zero() {
        return Err(Error::invalid("weights sum to zero"));
    }
    if !(cfg.alpha_floor > F::zero() && cfg.alpha_max > cfg.alpha_floor) {
        return Err(Error::invalid("alpha bounds must satisfy 0 < floor < max"));
    }

    let weights: Vec<F> = weights.iter().map(|&w| w / total).collect();
    let (lo, hi, abs_max) = ys.iter().zip(&weights).filter(|(_, &w)| w > F::zero()).fold(
        (F::infinity(), F::neg_infinity(), F::zero()),
        |(lo, hi, m), (&y, _)| (lo.min(y), hi.max(y), m.max(y.abs())),
    );
    let sample = Sample { ys, weights, lo };
    let d = delta.get();
    let bound = cfg.eta_bound.unwrap_or_else(|| F::lit(2.0) * (abs_max + F::one()));
    let range = hi - lo;
    let scale = range.max(F::lit(1e-2));

    let t_lo = cfg.alpha_floor.ln();
    let t_hi = cfg.alpha_max.ln();
    let opts = NelderMeadOptions {
        max_iterations: cfg.max_iterations,
        tolerance: cfg.tolerance,
        initial_step: vec![F::one(), F::lit(0.1) * scale],
        bounds: Some(Bounds {
            lower: vec![t_lo, -bound],
            upper: vec![t_hi, bound],
        }),
    };

    let runs = cfg.restarts.max(1);
    let mut best: Option<(F, F, F)> = None;
    let mut converged_runs = 0;
    for r in 0..runs {
        // Deterministic start grid: α spread geometrically around the reward
        // scale, intercept at its exact minimiser for that α.
        let exponent = F::from_usize(r).unwrap() - F::from_usize(runs / 2).unwrap();
        let alpha0 = (scale * F::lit(10.0).powf(exponent)).max(cfg.alpha_floor).min(cfg.alpha_max);
        let s0 = sample.optimal_shift(alpha0).max(-bound).min(bound);
        let res = nelder_mead(
            |x: &[F]| sample.objective(x[0].exp(), x[1], d),
            &[alpha0.ln(), s0],
            &opts,
        );
        if res.converged {
            converged_runs += 1;
        }
        let alpha = res.x[0].exp().max(cfg.alpha_floor).min(cfg.alpha_max);
        let mut shift = res.x[1];
        let mut value = res.value;
        // Polish the intercept with its closed form when it stays in the box.
        let exact = sample.optimal_shift(alpha);
        if exact.abs() <= bound {
            let v = sample.objective(alpha, exact, d);
            if v <= value {
                shift = exact;
                value = v;
            }
        }
        if best.is_none_or(|(_, _, bv)| value < bv) {
            best = Some((alpha, shift, value));
        }
    }

    let (alpha, shift, value) = best.expect("at least one run");
    if converged_runs == 0 {
        let p = DualParams::from_shift(alpha, shift);
        return Err(Error::SolverDidNotConverge {
            restarts: runs,
            alpha: alpha.to_f64_lossy(),
            eta: p.eta.to_f64_lossy(),
            value: value.to_f64_lossy(),
        });
    }
    Ok(DualSolution {
        params: DualParams::from_shift(alpha, shift),
        value,
        runs,
        converged_runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const G_HALF_POINT_ONE: f64 = 0.280_205_373_838_590_27;

    fn r(d: f64) -> RadiusDelta<f64> {
        RadiusDelta::new(d).unwrap()
    }

    #[test]
    fn point_mass() {
        let ys = vec![0.5; 10];
        let w = vec![1.0; 10];
        let (p, v) = solve_dual(&ys, &w, r(0.1), &SolverConfig::default()).unwrap();
        assert!((-0.5..=-0.4999).contains(&v), "{v}");
        assert!((v + 0.5).abs() <= 2.0 * 1e-3 * 0.1);
        assert!(p.alpha >= 1e-3);
    }

    #[test]
    fn two_point_equal_weights() {
        let (_, v) = solve_dual(&[0.0, 1.0], &[1.0, 1.0], r(0.1), &SolverConfig::default()).unwrap();
        assert!((-v - G_HALF_POINT_ONE).abs() < 1e-7, "{}", -v);
    }

    #[test]
    fn zero_radius_recovers_mean() {
        let (_, v) = solve_dual(&[0.0, 1.0], &[1.0, 1.0], r(0.0), &SolverConfig::default()).unwrap();
        assert!((-v - 0.5).abs() < 1e-6, "{}", -v);
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = SolverConfig::default();
        assert!(matches!(solve_dual::<f64>(&[], &[], r(0.1), &cfg), Err(Error::EmptyInput(_))));
        assert!(solve_dual(&[1.0], &[0.0], r(0.1), &cfg).is_err());
        assert!(solve_dual(&[1.0, 2.0], &[1.0], r(0.1), &cfg).is_err());
    }

    #[test]
    fn exhausted_iterations_report_best_iterate() {
        let cfg = SolverConfig {
            max_iterations: 2,
            ..SolverConfig::default()
        };
        match solve_dual(&[0.0, 1.0, 3.0], &[1.0, 1.0, 1.0], r(0.2), &cfg) {
            Err(Error::SolverDidNotConverge { restarts, value, .. }) => {
                assert_eq!(restarts, 5);
                assert!(value.is_finite());
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn single_precision_solve() {
        let cfg = SolverConfig::<f32> {
            tolerance: 1e-5,
            ..SolverConfig::default()
        };
        let (_, v) = solve_dual(&[0.0f32, 1.0], &[1.0, 1.0], RadiusDelta::new(0.1f32).unwrap(), &cfg).unwrap();
        assert!((-v - 0.280_205_4).abs() < 1e-3, "{}", -v);
    }
}
