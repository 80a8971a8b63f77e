use driftrobust::dual::{
    bernoulli_worst_mean, loss, loss_grad, solve_dual, worst_case_mean_discrete, DiscreteDist, DualParams, RadiusDelta,
    SolverConfig,
};
use proptest::prelude::*;

fn r(d: f64) -> RadiusDelta<f64> {
    RadiusDelta::new(d).unwrap()
}

/// Support of up to 8 distinct points in [0, 1] with positive masses.
fn finite_dist() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=8).prop_flat_map(|k| {
        (
            prop::collection::btree_set(0u32..=1000, k),
            prop::collection::vec(0.05f64..1.0, k),
        )
            .prop_map(|(vals, w)| {
                let vals: Vec<f64> = vals.into_iter().map(|v| v as f64 / 1000.0).collect();
                let w = w[..vals.len()].to_vec();
                let s: f64 = w.iter().sum();
                (vals, w.into_iter().map(|x| x / s).collect())
            })
    })
}

fn dual_worst(ys: &[f64], w: &[f64], d: f64) -> f64 {
    -solve_dual(ys, w, r(d), &SolverConfig::default()).unwrap().1
}

/// The default floor binds when the optimal temperature is below it.
fn unfloored_dual_worst(ys: &[f64], w: &[f64], d: f64) -> f64 {
    let cfg = SolverConfig {
        alpha_floor: 1e-8,
        ..SolverConfig::default()
    };
    -solve_dual(ys, w, r(d), &cfg).unwrap().1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dual_matches_tilt_oracle((ys, w) in finite_dist(), frac in 0.01f64..0.9) {
        let dist = DiscreteDist::new(ys.clone(), w.clone()).unwrap();
        let d = frac * dist.delta_max().min(5.0);
        prop_assume!(d > 0.0);
        let primal = worst_case_mean_discrete(&dist, r(d)).unwrap();
        prop_assert!((unfloored_dual_worst(&ys, &w, d) - primal).abs() <= 1e-5);
        prop_assert!(dual_worst(&ys, &w, d) <= primal + 1e-7);
    }

    #[test]
    fn worst_mean_is_bounded_and_monotone((ys, w) in finite_dist(), d1 in 0.0f64..1.0, d2 in 0.0f64..1.0) {
        let (lo, hi) = (d1.min(d2), d1.max(d2));
        let a = dual_worst(&ys, &w, lo);
        let b = dual_worst(&ys, &w, hi);
        let min = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let mean: f64 = ys.iter().zip(&w).map(|(y, p)| y * p).sum();
        prop_assert!(b <= a + 1e-7);
        prop_assert!(a <= mean + 1e-7 && b >= min - 2e-3 * hi - 1e-7);
    }

    #[test]
    fn translation_and_scale_equivariance((ys, w) in finite_dist(), frac in 0.01f64..0.8, c in -5.0f64..5.0, s in 0.2f64..5.0) {
        prop_assume!(ys.len() >= 2);
        let d = frac * DiscreteDist::new(ys.clone(), w.clone()).unwrap().delta_max().min(2.0);
        let base = dual_worst(&ys, &w, d);
        let shifted: Vec<f64> = ys.iter().map(|y| y + c).collect();
        prop_assert!((dual_worst(&shifted, &w, d) - (base + c)).abs() <= 1e-5);
        let scaled: Vec<f64> = ys.iter().map(|y| y * s).collect();
        prop_assert!((dual_worst(&scaled, &w, d) - s * base).abs() <= 1e-5 * s.max(1.0));
    }

    #[test]
    fn gradient_matches_central_differences(y in -2.0f64..2.0, alpha in 0.2f64..5.0, eta in -2.0f64..2.0, d in 0.0f64..1.0) {
        let th = DualParams::new(alpha, eta).unwrap();
        let (ga, ge) = loss_grad(y, th, r(d)).unwrap();
        let h = 1e-6;
        let f = |a: f64, e: f64| loss(y, DualParams::new(a, e).unwrap(), r(d)).unwrap();
        let fa = (f(alpha + h, eta) - f(alpha - h, eta)) / (2.0 * h);
        let fe = (f(alpha, eta + h) - f(alpha, eta - h)) / (2.0 * h);
        prop_assert!((ga - fa).abs() <= 1e-5 * ga.abs().max(1.0));
        prop_assert!((ge - fe).abs() <= 1e-5 * ge.abs().max(1.0));
    }

    #[test]
    fn loss_is_convex_along_segments(y in -1.0f64..1.0, a0 in 0.1f64..3.0, e0 in -2.0f64..2.0, a1 in 0.1f64..3.0, e1 in -2.0f64..2.0, t in 0.0f64..1.0) {
        let f = |a: f64, e: f64| loss(y, DualParams::new(a, e).unwrap(), r(0.1)).unwrap();
        let mid = f(a0 + t * (a1 - a0), e0 + t * (e1 - e0));
        prop_assert!(mid <= (1.0 - t) * f(a0, e0) + t * f(a1, e1) + 1e-9);
    }

    #[test]
    fn single_precision_tracks_double(y in -1.0f32..1.0, alpha in 0.5f32..3.0, eta in -1.0f32..1.0) {
        let v32 = loss(y, DualParams::new(alpha, eta).unwrap(), RadiusDelta::new(0.1f32).unwrap()).unwrap();
        let v64 = loss(y as f64, DualParams::new(alpha as f64, eta as f64).unwrap(), r(0.1)).unwrap();
        prop_assert!((v32 as f64 - v64).abs() <= 1e-5 * v64.abs().max(1.0));
    }
}

#[test]
fn bernoulli_oracle_values() {
    let g = bernoulli_worst_mean(0.5, r(0.1)).unwrap();
    assert!((g - 0.280_205_373_838_590_27).abs() < 1e-12);
    assert!((bernoulli_worst_mean(0.55, r(0.1)).unwrap() - 0.327_928_652_526_582_75).abs() < 1e-12);
    assert!((bernoulli_worst_mean(0.45, r(0.1)).unwrap() - 0.234_741_868_457_715_37).abs() < 1e-12);
}

#[test]
fn point_mass_sits_within_the_floor_band() {
    let v = dual_worst(&[0.3; 10], &[0.1; 10], 0.2);
    assert!((v - 0.3).abs() <= 2.0 * 1e-3 * 0.2);
}

#[test]
fn zero_radius_is_the_mean() {
    let ys = [0.1, 0.4, 0.9];
    let w = [0.2, 0.3, 0.5];
    let mean: f64 = ys.iter().zip(&w).map(|(y, p)| y * p).sum();
    assert!((dual_worst(&ys, &w, 0.0) - mean).abs() < 1e-6);
}
