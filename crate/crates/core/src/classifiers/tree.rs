//! Unpruned CART decision tree with Gini impurity.

use serde::{Deserialize, Serialize};

use super::{validate_examples, Predictor};
use crate::dataset::{ClassLabel, Example};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    /// Nodes with at least this many observations may be split.
    pub min_parent: usize,
    pub max_depth: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            min_parent: 1,
            max_depth: None,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_parent == 0 {
            return Err(Error::Config("tree.min_parent must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        class: ClassLabel,
        counts: [usize; 2],
    },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    dimension: usize,
    nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}

impl Predictor for DecisionTree {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn predict_features(&self, features: &[f64]) -> ClassLabel {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { class, .. } => return *class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if features[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[1] as f64 / n;
    2.0 * p * (1.0 - p)
}

fn leaf(counts: [usize; 2]) -> TreeNode {
    // equal counts resolve to the lower class id
    let class = ClassLabel::from(counts[1] > counts[0]);
    TreeNode::Leaf { class, counts }
}

struct Split {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn best_split(examples: &[Example<'_>], idx: &mut [usize], d: usize, counts: [usize; 2]) -> Option<Split> {
    let n = idx.len();
    let mut best: Option<Split> = None;
    for f in 0..d {
        idx.sort_by(|&a, &b| {
            examples[a].features[f]
                .total_cmp(&examples[b].features[f])
                .then(a.cmp(&b))
        });
        let mut left = [0usize; 2];
        for i in 0..n - 1 {
            left[examples[idx[i]].label.as_u8() as usize] += 1;
            let lo = examples[idx[i]].features[f];
            let hi = examples[idx[i + 1]].features[f];
            if lo >= hi {
                continue;
            }
            let right = [counts[0] - left[0], counts[1] - left[1]];
            let nl = (i + 1) as f64;
            let impurity = (nl * gini(left) + (n as f64 - nl) * gini(right)) / n as f64;
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid < hi { mid } else { lo };
                best = Some(Split {
                    feature: f,
                    threshold,
                    impurity,
                });
            }
        }
    }
    best
}

pub(super) fn train(params: &TreeParams, examples: &[Example<'_>]) -> Result<DecisionTree> {
    let d = validate_examples(examples)?;
    let mut nodes: Vec<TreeNode> = Vec::new();
    // (slot, member indices, depth)
    let mut stack: Vec<(usize, Vec<usize>, usize)> = Vec::new();
    nodes.push(leaf([0, 0]));
    stack.push((0, (0..examples.len()).collect(), 0));

    while let Some((slot, mut idx, depth)) = stack.pop() {
        let mut counts = [0usize; 2];
        for &i in &idx {
            counts[examples[i].label.as_u8() as usize] += 1;
        }
        let splittable = counts[0] > 0
            && counts[1] > 0
            && idx.len() >= params.min_parent.max(2)
            && params.max_depth.is_none_or(|m| depth < m);
        let split = if splittable {
            best_split(examples, &mut idx, d, counts)
        } else {
            None
        };
        match split {
            None => nodes[slot] = leaf(counts),
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx
                    .iter()
                    .partition(|&&i| examples[i].features[s.feature] <= s.threshold);
                let left = nodes.len();
                nodes.push(leaf([0, 0]));
                let right = nodes.len();
                nodes.push(leaf([0, 0]));
                nodes[slot] = TreeNode::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                };
                stack.push((right, r, depth + 1));
                stack.push((left, l, depth + 1));
            }
        }
    }
    Ok(DecisionTree { dimension: d, nodes })
}
