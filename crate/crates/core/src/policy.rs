//! Deterministic policies mapping a covariate vector to an action index.
//!
//! Action indices are 0-based in code; files and reports use 1-based labels.

use std::sync::Arc;

pub trait Policy: Send + Sync {
    fn action(&self, x: &[f64]) -> usize;

    /// Apply the policy row by row to a row-major covariate matrix.
    fn actions(&self, x: &[f64], dim: usize) -> Vec<usize> {
        x.chunks_exact(dim).map(|row| self.action(row)).collect()
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn action(&self, x: &[f64]) -> usize {
        (**self).action(x)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn action(&self, x: &[f64]) -> usize {
        (**self).action(x)
    }
}

impl<P: Policy + ?Sized> Policy for Arc<P> {
    fn action(&self, x: &[f64]) -> usize {
        (**self).action(x)
    }
}

/// Always plays the same action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantPolicy(pub usize);

impl Policy for ConstantPolicy {
    fn action(&self, _x: &[f64]) -> usize {
        self.0
    }
}

/// Wraps a closure.
pub struct FnPolicy<F>(pub F);

impl<F> Policy for FnPolicy<F>
where
    F: Fn(&[f64]) -> usize + Send + Sync,
{
    fn action(&self, x: &[f64]) -> usize {
        (self.0)(x)
    }
}
