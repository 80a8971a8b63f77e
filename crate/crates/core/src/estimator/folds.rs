use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::{self, stream};
use crate::{Error, Result};

/// Smallest number of folds the three-way cross-fitting scheme supports.
pub const MIN_FOLDS: usize = 3;

/// A random partition of `0..n` into `K` folds whose sizes differ by at most one.
///
/// Fold `k` is evaluated with nuisances trained on fold `k+1` (propensity and
/// dual field) and fold `k+2` (regression), indices taken modulo `K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    k: usize,
    assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn num_folds(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn fold_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Row indices of fold `k` (taken modulo `K`), ascending.
    pub fn indices(&self, k: usize) -> Vec<usize> {
        let k = k % self.k;
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == k).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.assignment {
            s[f] += 1;
        }
        s
    }

    /// Fold used to fit the propensity and dual field for evaluation fold `k`.
    pub fn nuisance_fold(&self, k: usize) -> usize {
        (k + 1) % self.k
    }

    /// Fold used to fit the regression for evaluation fold `k`.
    pub fn regression_fold(&self, k: usize) -> usize {
        (k + 2) % self.k
    }
}

pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < MIN_FOLDS {
        return Err(Error::invalid(format!("cross-fitting needs at least {MIN_FOLDS} folds, got {k}")));
    }
    if n < k {
        return Err(Error::invalid(format!("cannot split {n} rows into {k} folds")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::rng_for(seed, &[stream::FOLDS]));
    let mut assignment = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        assignment[i] = pos % k;
    }
    Ok(FoldPlan { k, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(make_folds(9, 3, 0).unwrap().sizes(), vec![3, 3, 3]);
        let mut s = make_folds(10, 3, 0).unwrap().sizes();
        s.sort();
        assert_eq!(s, vec![3, 3, 4]);
    }

    #[test]
    fn deterministic_and_validated() {
        assert_eq!(make_folds(50, 4, 9).unwrap(), make_folds(50, 4, 9).unwrap());
        assert_ne!(make_folds(50, 4, 9).unwrap(), make_folds(50, 4, 10).unwrap());
        assert!(make_folds(10, 2, 0).is_err());
        assert!(make_folds(2, 3, 0).is_err());
    }

    #[test]
    fn fold_roles_wrap() {
        let p = make_folds(12, 3, 1).unwrap();
        assert_eq!((p.nuisance_fold(2), p.regression_fold(2)), (0, 1));
    }
}
