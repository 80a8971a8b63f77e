//! Derivative-free minimisation.

use crate::Scalar;

/// Box constraint applied by projection after every simplex move.
#[derive(Debug, Clone)]
pub struct Bounds<F> {
    pub lower: Vec<F>,
    pub upper: Vec<F>,
}

impl<F: Scalar> Bounds<F> {
    fn project(&self, x: &mut [F]) {
        for ((v, &lo), &hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.max(lo).min(hi);
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadOptions<F> {
    pub max_iterations: usize,
    /// Convergence threshold on the simplex diameter (max-norm distance of any
    /// vertex from the best vertex).
    pub tolerance: F,
    /// Per-coordinate offset used to build the initial simplex.
    pub initial_step: Vec<F>,
    pub bounds: Option<Bounds<F>>,
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult<F> {
    pub x: Vec<F>,
    pub value: F,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimise `f` from `start` with the standard reflection (1), expansion (2),
/// contraction (1/2) and shrink (1/2) coefficients.
///
/// Non-finite objective values are treated as `+inf`, so infeasible regions
/// repel the simplex instead of poisoning it.
pub fn nelder_mead<F, Obj>(mut f: Obj, start: &[F], opts: &NelderMeadOptions<F>) -> NelderMeadResult<F>
where
    F: Scalar,
    Obj: FnMut(&[F]) -> F,
{
    let dim = start.len();
    assert_eq!(opts.initial_step.len(), dim, "initial_step length mismatch");
    let half = F::lit(0.5);
    let two = F::lit(2.0);
    let mut evaluations = 0usize;
    let mut eval = |x: &[F], evaluations: &mut usize| {
        *evaluations += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            F::infinity()
        }
    };

    let mut simplex: Vec<Vec<F>> = Vec::with_capacity(dim + 1);
    let mut x0 = start.to_vec();
    if let Some(b) = &opts.bounds {
        b.project(&mut x0);
    }
    simplex.push(x0.clone());
    for i in 0..dim {
        let mut v = x0.clone();
        v[i] = v[i] + opts.initial_step[i];
        if let Some(b) = &opts.bounds {
            b.project(&mut v);
            if v[i] == x0[i] {
                // Pinned against the upper bound: step inward instead.
                v[i] = x0[i] - opts.initial_step[i];
                b.project(&mut v);
            }
        }
        simplex.push(v);
    }
    let mut values: Vec<F> = simplex.iter().map(|v| eval(v, &mut evaluations)).collect();

    let mut iterations = 0usize;
    let mut converged = false;
    let mut centroid = vec![F::zero(); dim];
    let mut trial = vec![F::zero(); dim];
    let mut trial2 = vec![F::zero(); dim];

    loop {
        // Order vertices by value; stable so ties keep insertion order.
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (*a - *b).abs()))
            .fold(F::zero(), F::max);
        if diameter <= opts.tolerance {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = F::zero());
        for v in &simplex[..dim] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c = *c + *x;
            }
        }
        let inv = F::one() / F::from_usize(dim).unwrap();
        centroid.iter_mut().for_each(|c| *c = *c * inv);

        let worst = dim;
        let along = |coef: F, out: &mut Vec<F>, worst_v: &[F]| {
            for ((o, c), w) in out.iter_mut().zip(&centroid).zip(worst_v) {
                *o = *c + coef * (*c - *w);
            }
            if let Some(b) = &opts.bounds {
                b.project(out);
            }
        };

        along(F::one(), &mut trial, &simplex[worst]);
        let f_reflect = eval(&trial, &mut evaluations);

        if f_reflect < values[0] {
            along(two, &mut trial2, &simplex[worst]);
            let f_expand = eval(&trial2, &mut evaluations);
            if f_expand < f_reflect {
                simplex[worst].clone_from(&trial2);
                values[worst] = f_expand;
            } else {
                simplex[worst].clone_from(&trial);
                values[worst] = f_reflect;
            }
            continue;
        }
        if f_reflect < values[dim - 1] {
            simplex[worst].clone_from(&trial);
            values[worst] = f_reflect;
            continue;
        }
        // Contraction: outside if the reflection improved on the worst vertex.
        let (coef, reference) = if f_reflect < values[worst] {
            (half, f_reflect)
        } else {
            (-half, values[worst])
        };
        along(coef, &mut trial2, &simplex[worst]);
        let f_contract = eval(&trial2, &mut evaluations);
        if f_contract < reference {
            simplex[worst].clone_from(&trial2);
            values[worst] = f_contract;
            continue;
        }
        // Shrink toward the best vertex.
        let best = simplex[0].clone();
        for i in 1..=dim {
            for (x, b) in simplex[i].iter_mut().zip(&best) {
                *x = *b + half * (*x - *b);
            }
            values[i] = eval(&simplex[i], &mut evaluations);
        }
    }

    NelderMeadResult {
        x: simplex[0].clone(),
        value: values[0],
        iterations,
        evaluations,
        converged,
    }
}
