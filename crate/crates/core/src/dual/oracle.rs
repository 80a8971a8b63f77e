//! Primal worst-case oracles for finite supports.
//!
//! The KL-worst-case law against `P` is an exponential tilt
//! `Q_t ∝ P·exp(-y/t)`. Its divergence `KL(Q_t || P)` decreases monotonically
//! in the temperature `t`, so the tilt matching a radius is found by bisection.

use super::{DiscreteDist, RadiusDelta};
use crate::{Error, Result, Scalar};

const TILT_LOG_LO: f64 = -18.420_680_743_952_367; // ln 1e-8
const TILT_LOG_HI: f64 = 18.420_680_743_952_367; // ln 1e8
const KL_TOLERANCE: f64 = 1e-12;

/// Tilted distribution at temperature `t`: returns `(KL(Q_t||P), E_Q[Y])`.
fn tilt<F: Scalar>(dist: &DiscreteDist<F>, lo: F, t: F) -> (F, F) {
    // Shift by the minimum so every exponent is <= 0.
    let mut z = F::zero();
    let mut zy = F::zero();
    let mut zlog = F::zero();
    for (&y, &p) in dist.values().iter().zip(dist.probs()) {
        if p <= F::zero() {
            continue;
        }
        let a = -(y - lo) / t;
        let w = p * a.exp();
        z = z + w;
        zy = zy + w * y;
        zlog = zlog + w * a;
    }
    // KL = E_Q[a] - ln E_P[e^a] with a the shifted log-tilt.
    let kl = zlog / z - z.ln();
    (kl.max(F::zero()), zy / z)
}

/// Exact `inf { E_Q[Y] : KL(Q||P) <= δ }` for a finite-support `P`.
///
/// When `δ` reaches `-ln(mass at the essential infimum)` the ball contains the
/// point mass at the infimum and that value is returned exactly.
pub fn worst_case_mean_discrete<F: Scalar>(dist: &DiscreteDist<F>, delta: RadiusDelta<F>) -> Result<F> {
    let delta = delta.get();
    let lo = dist.ess_inf();
    if delta == F::zero() {
        return Ok(dist.mean());
    }
    let mass = dist.mass_at_ess_inf();
    if mass >= F::one() || delta >= -mass.ln() {
        return Ok(lo);
    }

    let mut a = F::lit(TILT_LOG_LO);
    let mut b = F::lit(TILT_LOG_HI);
    let tol = F::lit(KL_TOLERANCE);
    let (kl_hi_temp, mean_hi_temp) = tilt(dist, lo, b.exp());
    if kl_hi_temp >= delta {
        // Radius below what the bracket resolves; the tilt is essentially flat.
        return Ok(mean_hi_temp);
    }
    let mut mean = mean_hi_temp;
    for _ in 0..400 {
        let mid = (a + b) * F::lit(0.5);
        let (kl, m) = tilt(dist, lo, mid.exp());
        mean = m;
        if (kl - delta).abs() <= tol {
            break;
        }
        // Higher temperature -> smaller divergence.
        if kl > delta {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= F::epsilon() * (F::one() + a.abs()) {
            break;
        }
    }
    Ok(mean)
}

/// Binary KL divergence `D(p || q)`.
pub fn bernoulli_kl<F: Scalar>(p: F, q: F) -> F {
    let term = |a: F, b: F| if a <= F::zero() { F::zero() } else { a * (a / b).ln() };
    term(p, q) + term(F::one() - p, F::one() - q)
}

/// `g_δ(q) = inf { p : D(p || q) <= δ }`, the worst-case success probability
/// of a Bernoulli(q) reward.
///
/// Returns `0` once `δ >= -ln(1 - q)` (the point mass at zero is feasible).
pub fn bernoulli_worst_mean<F: Scalar>(q: F, delta: RadiusDelta<F>) -> Result<F> {
    if !q.is_finite() {
        return Err(Error::NonFinite("bernoulli mean"));
    }
    if q <= F::zero() || q >= F::one() {
        return Err(Error::invalid(format!("bernoulli mean must lie in (0,1), got {q}")));
    }
    let delta = delta.get();
    if delta == F::zero() {
        return Ok(q);
    }
    if delta >= -(F::one() - q).ln() {
        return Ok(F::zero());
    }
    // D(p||q) is decreasing on [0, q]; find the crossing.
    let mut lo = F::zero();
    let mut hi = q;
    let tol = F::lit(1e-12).max(F::epsilon());
    while hi - lo > tol {
        let mid = (lo + hi) * F::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if bernoulli_kl(mid, q) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * F::lit(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(d: f64) -> RadiusDelta<f64> {
        RadiusDelta::new(d).unwrap()
    }

    // Reference value from a 40-digit bisection on D(p||0.5) = 0.1.
    const G_HALF_POINT_ONE: f64 = 0.280_205_373_838_590_27;

    #[test]
    fn zero_radius_is_the_mean() {
        let d = DiscreteDist::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(worst_case_mean_discrete(&d, r(0.0)).unwrap(), 0.5);
    }

    #[test]
    fn two_point_matches_bernoulli_reference() {
        let d = DiscreteDist::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let v = worst_case_mean_discrete(&d, r(0.1)).unwrap();
        assert!((v - G_HALF_POINT_ONE).abs() < 1e-10, "{v}");
    }

    #[test]
    fn large_radius_hits_ess_inf() {
        let d = DiscreteDist::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(worst_case_mean_discrete(&d, r(0.7)).unwrap(), 0.0);
    }

    #[test]
    fn point_mass() {
        let d = DiscreteDist::new(vec![0.5], vec![1.0]).unwrap();
        assert_eq!(worst_case_mean_discrete(&d, r(0.1)).unwrap(), 0.5);
    }

    #[test]
    fn bernoulli_reference_values() {
        assert_eq!(bernoulli_worst_mean(0.5, r(0.0)).unwrap(), 0.5);
        let v = bernoulli_worst_mean(0.5, r(0.1)).unwrap();
        assert!((v - G_HALF_POINT_ONE).abs() < 1e-11, "{v}");
        assert_eq!(bernoulli_worst_mean(0.5, r(1.0)).unwrap(), 0.0);
        assert!(bernoulli_worst_mean(0.0, r(0.1)).is_err());
        assert!(bernoulli_worst_mean(1.0, r(0.1)).is_err());
    }

    #[test]
    fn bernoulli_f32() {
        let v = bernoulli_worst_mean(0.5f32, RadiusDelta::new(0.1f32).unwrap()).unwrap();
        assert!((v - 0.280_205_4f32).abs() < 1e-5);
    }
}
