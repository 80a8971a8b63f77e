//! Exact search over axis-aligned policy trees of depth at most two.
//!
//! Thresholds are midpoints between consecutive distinct observed values of a
//! feature. For a fixed set of rows, the best depth-1 tree on feature `j`
//! is read off a segment tree over the distinct values of `j`: each node keeps
//! the per-action score totals of its range and, for every ordered action pair
//! `(a, b)`, the best prefix advantage `max_c Σ_{≤c} (s_a − s_b)`. The depth-2
//! search sweeps the root threshold, moving rows one at a time from the right
//! child's segment trees into the left child's, so every root split is scored
//! in `O(d · M² · log n)` per moved row instead of a full rescan.

use rayon::prelude::*;

use super::tree::PolicyTree;
use super::ScoreMatrix;
use crate::{Error, Result};

/// Largest depth the exact search supports.
pub const MAX_DEPTH: usize = 2;

/// Distinct sorted values of one feature and each row's group.
struct FeatureGroups {
    values: Vec<f64>,
    group: Vec<usize>,
}

impl FeatureGroups {
    fn new(x: &[f64], dim: usize, j: usize) -> Self {
        let n = x.len() / dim;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| x[a * dim + j].total_cmp(&x[b * dim + j]));
        let mut values = Vec::new();
        let mut group = vec![0; n];
        for &i in &order {
            let v = x[i * dim + j];
            if values.last() != Some(&v) {
                values.push(v);
            }
            group[i] = values.len() - 1;
        }
        Self { values, group }
    }

    fn threshold(&self, g: usize) -> f64 {
        0.5 * (self.values[g] + self.values[g + 1])
    }
}

/// Segment tree over the groups of one feature for a subset of rows.
#[derive(Clone)]
struct SegTree {
    m: usize,
    size: usize,
    groups: usize,
    totals: Vec<f64>,
    best: Vec<f64>,
    arg: Vec<u32>,
}

impl SegTree {
    fn new(groups: usize, m: usize) -> Self {
        let size = groups.next_power_of_two();
        let mut t = Self {
            m,
            size,
            groups,
            totals: vec![0.0; 2 * size * m],
            best: vec![f64::NEG_INFINITY; 2 * size * m * m],
            arg: vec![0; 2 * size * m * m],
        };
        for g in 0..size {
            t.refresh_leaf(g);
        }
        for node in (1..size).rev() {
            t.pull(node);
        }
        t
    }

    fn refresh_leaf(&mut self, g: usize) {
        let (m, node) = (self.m, self.size + g);
        for a in 0..m {
            for b in 0..m {
                let k = node * m * m + a * m + b;
                // Cutting after the last group leaves the right side empty;
                // that tree is the constant one and is handled separately.
                self.best[k] = if g + 1 < self.groups {
                    self.totals[node * m + a] - self.totals[node * m + b]
                } else {
                    f64::NEG_INFINITY
                };
                self.arg[k] = g as u32;
            }
        }
    }

    fn pull(&mut self, node: usize) {
        let (m, l, r) = (self.m, 2 * node, 2 * node + 1);
        for a in 0..m {
            self.totals[node * m + a] = self.totals[l * m + a] + self.totals[r * m + a];
        }
        for a in 0..m {
            for b in 0..m {
                let lk = l * m * m + a * m + b;
                let rk = r * m * m + a * m + b;
                let through = self.totals[l * m + a] - self.totals[l * m + b] + self.best[rk];
                let k = node * m * m + a * m + b;
                // Ties keep the left (lower threshold) cut.
                if through > self.best[lk] {
                    self.best[k] = through;
                    self.arg[k] = self.arg[rk];
                } else {
                    self.best[k] = self.best[lk];
                    self.arg[k] = self.arg[lk];
                }
            }
        }
    }

    fn add(&mut self, g: usize, scores: &[f64], sign: f64) {
        let m = self.m;
        let node = self.size + g;
        for a in 0..m {
            self.totals[node * m + a] += sign * scores[a];
        }
        self.refresh_leaf(g);
        let mut k = node / 2;
        while k >= 1 {
            self.pull(k);
            k /= 2;
        }
    }

    /// Best depth-≤1 tree on this feature for the current subset.
    fn best_stump(&self, feature: usize) -> Stump {
        let m = self.m;
        let mut out = Stump {
            value: f64::NEG_INFINITY,
            shape: StumpShape::Leaf(0),
        };
        for a in 0..m {
            let v = self.totals[m + a];
            if v > out.value {
                out = Stump {
                    value: v,
                    shape: StumpShape::Leaf(a),
                };
            }
        }
        for a in 0..m {
            for b in 0..m {
                if a == b {
                    continue;
                }
                let k = m * m + a * m + b;
                let v = self.best[k] + self.totals[m + b];
                if v > out.value {
                    out = Stump {
                        value: v,
                        shape: StumpShape::Split {
                            feature,
                            group: self.arg[k] as usize,
                            left: a,
                            right: b,
                        },
                    };
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
enum StumpShape {
    Leaf(usize),
    Split { feature: usize, group: usize, left: usize, right: usize },
}

#[derive(Debug, Clone, Copy)]
struct Stump {
    value: f64,
    shape: StumpShape,
}

impl Stump {
    fn to_tree(self, groups: &[FeatureGroups]) -> PolicyTree {
        match self.shape {
            StumpShape::Leaf(a) => PolicyTree::leaf(a),
            StumpShape::Split {
                feature,
                group,
                left,
                right,
            } => PolicyTree::split(
                feature,
                groups[feature].threshold(group),
                PolicyTree::leaf(left),
                PolicyTree::leaf(right),
            ),
        }
    }
}

/// Best stump over all features (lowest feature wins ties).
fn best_over_features(trees: &[SegTree]) -> Stump {
    let mut best: Option<Stump> = None;
    for (j, t) in trees.iter().enumerate() {
        let s = t.best_stump(j);
        if best.is_none_or(|b| s.value > b.value) {
            best = Some(s);
        }
    }
    best.expect("at least one feature")
}

/// `(1/n) Σ_i S[i][tree(x_i)]`, summed in row order.
pub fn tree_value(scores: &ScoreMatrix, x: &[f64], dim: usize, tree: &PolicyTree) -> f64 {
    use crate::policy::Policy;
    let n = scores.n();
    let mut s = 0.0;
    for i in 0..n {
        s += scores.get(i, tree.action(&x[i * dim..(i + 1) * dim]));
    }
    s / n as f64
}

/// Exact maximiser of the mean score over depth-≤`depth` trees.
///
/// Returns the tree and its value `(1/n) Σ_i S[i][tree(x_i)]`.
pub fn search_policy_tree(scores: &ScoreMatrix, x: &[f64], dim: usize, depth: usize) -> Result<(PolicyTree, f64)> {
    if depth > MAX_DEPTH {
        return Err(Error::UnsupportedDepth(depth));
    }
    let (n, m) = (scores.n(), scores.m());
    if n == 0 {
        return Err(Error::EmptyInput("score matrix"));
    }
    if dim == 0 || x.len() != n * dim {
        return Err(Error::invalid("covariates do not match the score matrix"));
    }

    if depth == 0 {
        let mut best = (f64::NEG_INFINITY, 0);
        for a in 0..m {
            let s: f64 = (0..n).map(|i| scores.get(i, a)).sum();
            if s > best.0 {
                best = (s, a);
            }
        }
        let tree = PolicyTree::leaf(best.1);
        let v = tree_value(scores, x, dim, &tree);
        return Ok((tree, v));
    }

    let groups: Vec<FeatureGroups> = (0..dim).map(|j| FeatureGroups::new(x, dim, j)).collect();
    let full: Vec<SegTree> = groups
        .iter()
        .map(|fg| {
            let mut t = SegTree::new(fg.values.len(), m);
            let mut leaf_tot = vec![0.0; fg.values.len() * m];
            for i in 0..n {
                for a in 0..m {
                    leaf_tot[fg.group[i] * m + a] += scores.get(i, a);
                }
            }
            for g in 0..fg.values.len() {
                let node = t.size + g;
                t.totals[node * m..(node + 1) * m].copy_from_slice(&leaf_tot[g * m..(g + 1) * m]);
                t.refresh_leaf(g);
            }
            for node in (1..t.size).rev() {
                t.pull(node);
            }
            t
        })
        .collect();
    let stump = best_over_features(&full);

    if depth == 1 {
        let tree = stump.to_tree(&groups);
        let v = tree_value(scores, x, dim, &tree);
        return Ok((tree, v));
    }

    // Depth two: sweep each root feature; candidates per feature are reduced
    // in feature order so the result does not depend on scheduling.
    let per_feature: Vec<Option<(f64, usize, usize, Stump, Stump)>> = (0..dim)
        .into_par_iter()
        .map(|j| {
            let fg = &groups[j];
            let mut right = full.clone();
            let mut left: Vec<SegTree> = groups.iter().map(|g| SegTree::new(g.values.len(), m)).collect();
            let mut rows_by_group: Vec<Vec<usize>> = vec![Vec::new(); fg.values.len()];
            for i in 0..n {
                rows_by_group[fg.group[i]].push(i);
            }
            let mut best: Option<(f64, usize, usize, Stump, Stump)> = None;
            for g in 0..fg.values.len().saturating_sub(1) {
                for &i in &rows_by_group[g] {
                    let s = scores.row(i);
                    for (jj, gr) in groups.iter().enumerate() {
                        left[jj].add(gr.group[i], s, 1.0);
                        right[jj].add(gr.group[i], s, -1.0);
                    }
                }
                let l = best_over_features(&left);
                let r = best_over_features(&right);
                let v = l.value + r.value;
                if best.as_ref().is_none_or(|b| v > b.0) {
                    best = Some((v, j, g, l, r));
                }
            }
            best
        })
        .collect();

    let mut chosen: (f64, Option<(usize, usize, Stump, Stump)>) = (stump.value, None);
    for (v, j, g, l, r) in per_feature.into_iter().flatten() {
        if v > chosen.0 {
            chosen = (v, Some((j, g, l, r)));
        }
    }
    let tree = match chosen.1 {
        None => stump.to_tree(&groups),
        Some((j, g, l, r)) => {
            let (lt, rt) = (l.to_tree(&groups), r.to_tree(&groups));
            if lt == rt && lt.depth() == 0 {
                lt
            } else {
                PolicyTree::split(j, groups[j].threshold(g), lt, rt)
            }
        }
    };
    let v = tree_value(scores, x, dim, &tree);
    Ok((tree, v))
}

/// Reference enumeration of every depth-≤1 tree; quadratic in `n`.
pub fn brute_force_depth1(scores: &ScoreMatrix, x: &[f64], dim: usize) -> (PolicyTree, f64) {
    let (n, m) = (scores.n(), scores.m());
    let mut best = (PolicyTree::leaf(0), f64::NEG_INFINITY);
    let mut consider = |t: PolicyTree| {
        let v = tree_value(scores, x, dim, &t);
        if v > best.1 {
            best = (t, v);
        }
    };
    for a in 0..m {
        consider(PolicyTree::leaf(a));
    }
    for j in 0..dim {
        let mut vals: Vec<f64> = (0..n).map(|i| x[i * dim + j]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            for a in 0..m {
                for b in 0..m {
                    consider(PolicyTree::split(j, t, PolicyTree::leaf(a), PolicyTree::leaf(b)));
                }
            }
        }
    }
    best
}
