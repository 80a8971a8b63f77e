//! Depth-limited axis-aligned policy trees and their JSON form.
//!
//! JSON layout: `{"depth": D, "nodes": [...]}` with nodes in pre-order; an
//! internal node is `{"feature": j, "threshold": t}` (rows with `x_j <= t` go
//! left) and a leaf is `{"action": a}`. Feature and action indices in JSON
//! are 1-based, matching the `x1..xd` and `a` CSV columns.

use serde::{Deserialize, Serialize};

use crate::policy::Policy;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    Split { feature: usize, threshold: f64 },
    Leaf { action: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTree {
    nodes: Vec<TreeNode>,
    /// Index of each split's right child; unused for leaves.
    right: Vec<usize>,
    depth: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WireNode {
    Split { feature: usize, threshold: f64 },
    Leaf { action: usize },
}

#[derive(Serialize, Deserialize)]
struct WireTree {
    depth: usize,
    nodes: Vec<WireNode>,
}

impl PolicyTree {
    pub fn leaf(action: usize) -> Self {
        Self::from_preorder(vec![TreeNode::Leaf { action }]).expect("single leaf is valid")
    }

    pub fn split(feature: usize, threshold: f64, left: PolicyTree, right: PolicyTree) -> Self {
        let mut nodes = vec![TreeNode::Split { feature, threshold }];
        nodes.extend(left.nodes);
        nodes.extend(right.nodes);
        Self::from_preorder(nodes).expect("children are complete trees")
    }

    /// Build from a pre-order node list, checking that it is a complete
    /// binary tree.
    pub fn from_preorder(nodes: Vec<TreeNode>) -> Result<Self> {
        let mut right = vec![0; nodes.len()];
        fn walk(nodes: &[TreeNode], right: &mut [usize], at: usize) -> Result<(usize, usize)> {
            match nodes.get(at) {
                None => Err(Error::PolicyParse {
                    location: format!("nodes[{at}]"),
                    message: "split is missing a child".into(),
                }),
                Some(TreeNode::Leaf { .. }) => Ok((at + 1, 0)),
                Some(TreeNode::Split { threshold, .. }) => {
                    if !threshold.is_finite() {
                        return Err(Error::PolicyParse {
                            location: format!("nodes[{at}].threshold"),
                            message: "threshold must be finite".into(),
                        });
                    }
                    let (after_left, dl) = walk(nodes, right, at + 1)?;
                    right[at] = after_left;
                    let (after_right, dr) = walk(nodes, right, after_left)?;
                    Ok((after_right, 1 + dl.max(dr)))
                }
            }
        }
        let (end, depth) = walk(&nodes, &mut right, 0)?;
        if end != nodes.len() {
            return Err(Error::PolicyParse {
                location: format!("nodes[{end}]"),
                message: "trailing nodes after a complete tree".into(),
            });
        }
        Ok(Self { nodes, right, depth })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Largest action index used by any leaf.
    pub fn max_action(&self) -> usize {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Leaf { action } => Some(*action),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Check feature and action indices against a data shape.
    pub fn validate(&self, dim: usize, num_actions: usize) -> Result<()> {
        for (k, n) in self.nodes.iter().enumerate() {
            match *n {
                TreeNode::Split { feature, .. } if feature >= dim => {
                    return Err(Error::PolicyParse {
                        location: format!("nodes[{k}].feature"),
                        message: format!("feature {} exceeds covariate dimension {dim}", feature + 1),
                    })
                }
                TreeNode::Leaf { action } if action >= num_actions => {
                    return Err(Error::PolicyParse {
                        location: format!("nodes[{k}].action"),
                        message: format!("action {} exceeds {num_actions} actions", action + 1),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let wire = WireTree {
            depth: self.depth,
            nodes: self
                .nodes
                .iter()
                .map(|n| match *n {
                    TreeNode::Split { feature, threshold } => WireNode::Split {
                        feature: feature + 1,
                        threshold,
                    },
                    TreeNode::Leaf { action } => WireNode::Leaf { action: action + 1 },
                })
                .collect(),
        };
        serde_json::to_string(&wire).expect("tree serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: WireTree = serde_json::from_str(text).map_err(|e| Error::PolicyParse {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        let mut nodes = Vec::with_capacity(wire.nodes.len());
        for (k, n) in wire.nodes.into_iter().enumerate() {
            nodes.push(match n {
                WireNode::Split { feature: 0, .. } | WireNode::Leaf { action: 0 } => {
                    return Err(Error::PolicyParse {
                        location: format!("nodes[{k}]"),
                        message: "feature and action indices are 1-based".into(),
                    })
                }
                WireNode::Split { feature, threshold } => TreeNode::Split {
                    feature: feature - 1,
                    threshold,
                },
                WireNode::Leaf { action } => TreeNode::Leaf { action: action - 1 },
            });
        }
        let tree = Self::from_preorder(nodes)?;
        if tree.depth > wire.depth {
            return Err(Error::PolicyParse {
                location: "depth".into(),
                message: format!("declared depth {} but tree has depth {}", wire.depth, tree.depth),
            });
        }
        Ok(tree)
    }
}

impl Policy for PolicyTree {
    fn action(&self, x: &[f64]) -> usize {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                TreeNode::Leaf { action } => return action,
                TreeNode::Split { feature, threshold } => {
                    k = if x[feature] <= threshold { k + 1 } else { self.right[k] };
                }
            }
        }
    }
}

impl Serialize for PolicyTree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: serde_json::Value = serde_json::from_str(&self.to_json()).map_err(serde::ser::Error::custom)?;
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PolicyTree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        PolicyTree::from_json(&v.to_string()).map_err(serde::de::Error::custom)
    }
}
