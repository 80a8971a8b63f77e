//! Multi-output CART regression trees and bootstrap-aggregated ensembles.
//!
//! Splits minimise the summed squared error over all outputs; with one-hot
//! targets that is the Gini criterion, so the same code backs both the
//! regression and the propensity models.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { offset: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    values: Vec<f64>,
    outputs: usize,
}

struct Builder<'a> {
    x: &'a [f64],
    dim: usize,
    y: &'a [f64],
    q: usize,
    params: TreeParams,
    nodes: Vec<Node>,
    values: Vec<f64>,
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let offset = self.values.len();
        let mut sums = vec![0.0; self.q];
        for &i in idx {
            for (s, v) in sums.iter_mut().zip(&self.y[i * self.q..(i + 1) * self.q]) {
                *s += v;
            }
        }
        self.values.extend(sums.iter().map(|s| s / idx.len() as f64));
        self.nodes.push(Node::Leaf { offset });
        self.nodes.len() - 1
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let m = idx.len();
        let min_leaf = self.params.min_leaf.max(1);
        if depth >= self.params.max_depth || m < 2 * min_leaf {
            return self.leaf(idx);
        }
        let q = self.q;
        let mut total = vec![0.0; q];
        for &i in idx.iter() {
            for (t, v) in total.iter_mut().zip(&self.y[i * q..(i + 1) * q]) {
                *t += v;
            }
        }
        let parent = total.iter().map(|t| t * t).sum::<f64>() / m as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut left = vec![0.0; q];
        let mut order = idx.to_vec();
        for f in 0..self.dim {
            let x = self.x;
            let dim = self.dim;
            order.sort_by(|&a, &b| x[a * dim + f].total_cmp(&x[b * dim + f]));
            left.iter_mut().for_each(|v| *v = 0.0);
            for pos in 1..m {
                let i = order[pos - 1];
                for (l, v) in left.iter_mut().zip(&self.y[i * q..(i + 1) * q]) {
                    *l += v;
                }
                if pos < min_leaf || m - pos < min_leaf {
                    continue;
                }
                let (xa, xb) = (x[i * dim + f], x[order[pos] * dim + f]);
                if xa >= xb {
                    continue;
                }
                let (nl, nr) = (pos as f64, (m - pos) as f64);
                let gain: f64 = left
                    .iter()
                    .zip(&total)
                    .map(|(&l, &t)| l * l / nl + (t - l) * (t - l) / nr)
                    .sum();
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, 0.5 * (xa + xb)));
                }
            }
        }
        let Some((gain, feature, threshold)) = best else {
            return self.leaf(idx);
        };
        if gain <= parent * (1.0 + 1e-12) + 1e-300 {
            return self.leaf(idx);
        }
        let x = self.x;
        let dim = self.dim;
        idx.sort_by(|&a, &b| x[a * dim + feature].total_cmp(&x[b * dim + feature]));
        let cut = idx.partition_point(|&i| x[i * dim + feature] <= threshold);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { offset: 0 });
        let (l_idx, r_idx) = idx.split_at_mut(cut);
        let l = self.build(l_idx, depth + 1);
        let r = self.build(r_idx, depth + 1);
        self.nodes[slot] = Node::Split {
            feature,
            threshold,
            left: l,
            right: r,
        };
        slot
    }
}

impl RegressionTree {
    /// Fit on the rows listed in `idx` (repeats allowed). `y` is row-major
    /// `n × outputs`.
    pub fn fit(x: &[f64], dim: usize, y: &[f64], outputs: usize, idx: &[usize], params: TreeParams) -> Self {
        assert!(!idx.is_empty(), "tree needs at least one row");
        let mut b = Builder {
            x,
            dim,
            y,
            q: outputs,
            params,
            nodes: Vec::new(),
            values: Vec::new(),
        };
        let mut idx = idx.to_vec();
        b.build(&mut idx, 0);
        Self {
            nodes: b.nodes,
            values: b.values,
            outputs,
        }
    }

    pub fn predict(&self, x: &[f64]) -> &[f64] {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf { offset } => return &self.values[offset..offset + self.outputs],
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Bootstrap-aggregated trees. Bag `b` draws its resample from a stream
/// derived from `(seed, b)`, so the ensemble does not depend on how bags are
/// scheduled across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggedTrees {
    trees: Vec<RegressionTree>,
    outputs: usize,
}

impl BaggedTrees {
    pub fn fit(x: &[f64], dim: usize, y: &[f64], outputs: usize, bags: usize, params: TreeParams, seed: u64) -> Self {
        let n = x.len() / dim;
        assert!(n > 0, "ensemble needs at least one row");
        let trees = (0..bags.max(1))
            .into_par_iter()
            .map(|b| {
                let idx: Vec<usize> = if bags <= 1 {
                    (0..n).collect()
                } else {
                    let mut r = rng::rng_for(seed, &[stream::BAG, b as u64]);
                    (0..n).map(|_| r.random_range(0..n)).collect()
                };
                RegressionTree::fit(x, dim, y, outputs, &idx, params)
            })
            .collect();
        Self { trees, outputs }
    }

    pub fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in &self.trees {
            for (o, v) in out.iter_mut().zip(t.predict(x)) {
                *o += v;
            }
        }
        let k = self.trees.len() as f64;
        out.iter_mut().for_each(|v| *v /= k);
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.outputs];
        self.predict_into(x, &mut out);
        out
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }
}
