//! Sieve bases: finite feature maps `φ(x)` whose first entry is the constant 1.
//!
//! Coordinates are standardised with training statistics and clamped to the
//! training range before expansion, so cubic terms cannot explode on rows
//! outside the fitting sample.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisSpec {
    /// All monomials of total degree `<= degree` (degree 0 is the constant).
    Polynomial { degree: usize },
    /// Per coordinate: `z, z², z³` and `(z - κ)³₊` at `knots` interior knots
    /// placed at empirical quantiles.
    AdditiveSpline { knots: usize },
}

/// Dimension above which the default falls back to a quadratic polynomial.
pub const SPLINE_MAX_DIM: usize = 10;

impl BasisSpec {
    pub fn constant() -> Self {
        BasisSpec::Polynomial { degree: 0 }
    }

    /// Four-knot additive cubic spline, or quadratic polynomial above
    /// [`SPLINE_MAX_DIM`] covariates.
    pub fn default_for_dim(dim: usize) -> Self {
        if dim > SPLINE_MAX_DIM {
            BasisSpec::Polynomial { degree: 2 }
        } else {
            BasisSpec::AdditiveSpline { knots: 4 }
        }
    }
}

/// A basis with its fitted standardisation and knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    spec: BasisSpec,
    dim: usize,
    center: Vec<f64>,
    scale: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    knots: Vec<Vec<f64>>,
    monomials: Vec<Vec<usize>>,
    len: usize,
}

impl FeatureMap {
    /// Fit standardisation and knots on a row-major sample.
    pub fn fit(spec: BasisSpec, x: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("basis needs a positive dimension"));
        }
        let n = x.len() / dim;
        if n == 0 || x.len() % dim != 0 {
            return Err(Error::EmptyInput("basis fitting sample"));
        }
        let mut center = vec![0.0; dim];
        let mut scale = vec![1.0; dim];
        let mut lower = vec![f64::NEG_INFINITY; dim];
        let mut upper = vec![f64::INFINITY; dim];
        let mut knots = vec![Vec::new(); dim];
        for j in 0..dim {
            let mut col: Vec<f64> = x.iter().skip(j).step_by(dim).copied().collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            center[j] = mean;
            scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
            col.sort_by(f64::total_cmp);
            lower[j] = (col[0] - mean) / scale[j];
            upper[j] = (col[n - 1] - mean) / scale[j];
            if let BasisSpec::AdditiveSpline { knots: k } = spec {
                let mut ks: Vec<f64> = (1..=k)
                    .map(|q| {
                        let pos = q as f64 / (k + 1) as f64 * (n - 1) as f64;
                        let (i, frac) = (pos.floor() as usize, pos.fract());
                        let v = if i + 1 < n { col[i] + frac * (col[i + 1] - col[i]) } else { col[i] };
                        (v - mean) / scale[j]
                    })
                    .filter(|&kv| kv > lower[j] && kv < upper[j])
                    .collect();
                ks.dedup();
                knots[j] = ks;
            }
        }
        Ok(Self::assemble(spec, dim, center, scale, lower, upper, knots))
    }

    /// Unstandardised, unclamped basis; used when coefficients are set by hand.
    pub fn raw(spec: BasisSpec, dim: usize) -> Result<Self> {
        if let BasisSpec::AdditiveSpline { knots } = spec {
            if knots > 0 {
                return Err(Error::invalid("raw spline basis needs explicit knots; use FeatureMap::fit"));
            }
        }
        Ok(Self::assemble(
            spec,
            dim,
            vec![0.0; dim],
            vec![1.0; dim],
            vec![f64::NEG_INFINITY; dim],
            vec![f64::INFINITY; dim],
            vec![Vec::new(); dim],
        ))
    }

    /// Nominal feature count of `spec` in `dim` coordinates.
    pub fn raw_len(spec: BasisSpec, dim: usize) -> usize {
        match spec {
            BasisSpec::Polynomial { degree } => monomials(dim, degree).len(),
            BasisSpec::AdditiveSpline { knots } => 1 + dim * (3 + knots),
        }
    }

    fn assemble(
        spec: BasisSpec,
        dim: usize,
        center: Vec<f64>,
        scale: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        knots: Vec<Vec<f64>>,
    ) -> Self {
        let monomials = match spec {
            BasisSpec::Polynomial { degree } => monomials(dim, degree),
            BasisSpec::AdditiveSpline { .. } => Vec::new(),
        };
        let len = match spec {
            BasisSpec::Polynomial { .. } => monomials.len(),
            BasisSpec::AdditiveSpline { .. } => 1 + knots.iter().map(|k| 3 + k.len()).sum::<usize>(),
        };
        Self {
            spec,
            dim,
            center,
            scale,
            lower,
            upper,
            knots,
            monomials,
            len,
        }
    }

    pub fn spec(&self) -> BasisSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of features, constant included.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Write `φ(x)` into `out` (length [`Self::len`]).
    pub fn features_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len);
        let z = |j: usize| ((x[j] - self.center[j]) / self.scale[j]).clamp(self.lower[j], self.upper[j]);
        match self.spec {
            BasisSpec::Polynomial { .. } => {
                for (o, m) in out.iter_mut().zip(&self.monomials) {
                    *o = m.iter().map(|&j| z(j)).product();
                }
            }
            BasisSpec::AdditiveSpline { .. } => {
                out[0] = 1.0;
                let mut k = 1;
                for j in 0..self.dim {
                    let v = z(j);
                    out[k] = v;
                    out[k + 1] = v * v;
                    out[k + 2] = v * v * v;
                    k += 3;
                    for &kn in &self.knots[j] {
                        out[k] = (v - kn).max(0.0).powi(3);
                        k += 1;
                    }
                }
            }
        }
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        self.features_into(x, &mut out);
        out
    }

    /// Row-major `n × len` design matrix.
    pub fn design(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len() / self.dim;
        let mut out = vec![0.0; n * self.len];
        for (row, chunk) in x.chunks_exact(self.dim).zip(out.chunks_exact_mut(self.len)) {
            self.features_into(row, chunk);
        }
        out
    }
}

/// Multisets of coordinate indices of size `<= degree`, constant first.
fn monomials(dim: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..degree {
        let mut next = Vec::new();
        for m in &frontier {
            let start = m.last().copied().unwrap_or(0);
            for j in start..dim {
                let mut e: Vec<usize> = m.clone();
                e.push(j);
                next.push(e);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}
