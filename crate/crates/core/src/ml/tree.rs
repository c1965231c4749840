//! CART classification tree with Gini impurity.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::argmax;
use crate::linalg::Matrix;
use crate::rng::{keyed_rng, KEY_NODE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Per-class sample counts that reached this leaf.
    Leaf { votes: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub n_classes: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeSettings {
    pub max_features: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub seed: u64,
    pub tree_index: u64,
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    n_classes: usize,
    settings: TreeSettings,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl DecisionTree {
    /// Grows a tree on the rows listed in `sample` (duplicates allowed).
    pub(crate) fn grow(
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        sample: &mut [usize],
        settings: TreeSettings,
    ) -> DecisionTree {
        let mut b = Builder {
            x,
            y,
            n_classes,
            settings,
            nodes: Vec::new(),
        };
        b.build(sample, 0);
        DecisionTree {
            nodes: b.nodes,
            n_features: x.cols(),
            n_classes,
        }
    }

    fn leaf_for(&self, row: &[f64]) -> &[usize] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { votes } => return votes,
            }
        }
    }

    /// Majority class of the reached leaf; lowest class index wins ties.
    pub fn predict_row(&self, row: &[f64]) -> usize {
        let votes = self.leaf_for(row);
        let as_f: Vec<f64> = votes.iter().map(|&v| v as f64).collect();
        argmax(&as_f)
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

fn sum_sq(counts: &[usize]) -> f64 {
    counts.iter().map(|&c| (c * c) as f64).sum()
}

impl Builder<'_> {
    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let mut counts = vec![0usize; self.n_classes];
        idx.iter().for_each(|&i| counts[self.y[i]] += 1);
        self.nodes.push(Node::Leaf {
            votes: counts.clone(),
        });

        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = self.settings.max_depth.is_some_and(|m| depth >= m);
        if pure || depth_capped || idx.len() < 2 * self.settings.min_samples_leaf {
            return id;
        }
        let Some(best) = self.best_split(idx, &counts, id) else {
            return id;
        };

        // partition in place, keeping relative order on both sides
        let (mut l, mut r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x[(i, best.feature)] <= best.threshold);
        let nl = l.len();
        let left = self.build(&mut l, depth + 1);
        let right = self.build(&mut r, depth + 1);
        idx[..nl].copy_from_slice(&l);
        idx[nl..].copy_from_slice(&r);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&self, idx: &[usize], counts: &[usize], node_id: usize) -> Option<BestSplit> {
        let d = self.x.cols();
        let n = idx.len();
        let min_leaf = self.settings.min_samples_leaf.max(1);
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(&mut keyed_rng(
            self.settings.seed,
            &[KEY_NODE, self.settings.tree_index, node_id as u64],
        ));

        let parent = sum_sq(counts) / n as f64;
        let mut best: Option<BestSplit> = None;
        let mut visited = 0;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
        for f in order {
            if visited >= self.settings.max_features {
                break;
            }
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (self.x[(i, f)], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[n - 1].0 {
                // constant in this node: does not count toward max_features
                continue;
            }
            visited += 1;

            let mut left = vec![0usize; self.n_classes];
            let mut right = counts.to_vec();
            for pos in 1..n {
                let c = pairs[pos - 1].1;
                left[c] += 1;
                right[c] -= 1;
                if pos < min_leaf || n - pos < min_leaf || pairs[pos - 1].0 == pairs[pos].0 {
                    continue;
                }
                // weighted Gini decrease, up to the constant factor 1/n
                let score = sum_sq(&left) / pos as f64 + sum_sq(&right) / (n - pos) as f64 - parent;
                let better = match &best {
                    None => true,
                    Some(b) => {
                        score > b.score + 1e-12 || ((score - b.score).abs() <= 1e-12 && f < b.feature)
                    }
                };
                if better {
                    let (lo, hi) = (pairs[pos - 1].0, pairs[pos].0);
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}
