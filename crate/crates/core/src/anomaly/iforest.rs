use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnomalyError;
use crate::linalg::Matrix;
use crate::ml::VersionedModel;
use crate::rng::{keyed_rng, KEY_NODE, KEY_SAMPLE};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Average unsuccessful-search path length in a binary search tree of `n`
/// nodes: `2 H(n-1) - 2 (n-1) / n` with `H(i) = ln i + gamma`; `c(0) = c(1) = 0`.
pub fn c(n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let m = (n - 1) as f64;
    2.0 * (m.ln() + EULER_GAMMA) - 2.0 * m / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IsolationForestParams {
    pub n_trees: usize,
    /// Requested subsample size; capped at the number of training rows.
    pub subsample_size: usize,
    pub contamination: f64,
    pub seed: u64,
}

impl Default for IsolationForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            subsample_size: 256,
            contamination: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IsolationNode {
    /// `x[feature] < threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    pub nodes: Vec<IsolationNode>,
}

impl IsolationTree {
    fn grow(x: &Matrix, rows: Vec<usize>, height_limit: usize, seed: u64, tree: u64) -> Self {
        let mut t = IsolationTree { nodes: Vec::new() };
        t.build(x, rows, 0, height_limit, seed, tree);
        t
    }

    fn build(
        &mut self,
        x: &Matrix,
        rows: Vec<usize>,
        depth: usize,
        limit: usize,
        seed: u64,
        tree: u64,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(IsolationNode::Leaf { size: rows.len() });
        if rows.len() <= 1 || depth >= limit {
            return id;
        }
        let ranges: Vec<(usize, f64, f64)> = (0..x.cols())
            .filter_map(|f| {
                let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                    (lo.min(x[(r, f)]), hi.max(x[(r, f)]))
                });
                (lo < hi).then_some((f, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            // all remaining rows are duplicates
            return id;
        }
        let mut rng = keyed_rng(seed, &[KEY_NODE, tree, id as u64]);
        let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
        let mut threshold = rng.random_range(lo..hi);
        if threshold <= lo {
            // keep both sides non-empty
            threshold = lo + (hi - lo) * 0.5;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| x[(i, feature)] < threshold);
        let left = self.build(x, l, depth + 1, limit, seed, tree);
        let right = self.build(x, r, depth + 1, limit, seed, tree);
        self.nodes[id] = IsolationNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    /// Edges from the root to the row's leaf plus `c(leaf size)`.
    pub fn path_length(&self, row: &[f64]) -> f64 {
        let mut id = 0;
        let mut depth = 0usize;
        loop {
            match &self.nodes[id] {
                IsolationNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if row[*feature] < *threshold { *left } else { *right };
                    depth += 1;
                }
                IsolationNode::Leaf { size } => return depth as f64 + c(*size),
            }
        }
    }

    pub fn height(&self) -> usize {
        fn walk(nodes: &[IsolationNode], id: usize) -> usize {
            match &nodes[id] {
                IsolationNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                IsolationNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForestModel {
    pub trees: Vec<IsolationTree>,
    pub n_features: usize,
    /// Effective subsample size after capping at the training row count.
    pub subsample_size: usize,
    pub contamination: f64,
    /// Shift applied so that the calibrated fraction of training rows is negative.
    pub offset: f64,
    pub params: IsolationForestParams,
}

impl VersionedModel for IsolationForestModel {
    const SCHEMA: &'static str = "adexpert.isolation_forest";
}

/// Number of training rows the offset calibration flags: `ceil(contamination * n)`.
pub fn calibrated_flag_count(contamination: f64, n: usize) -> usize {
    // guard against products like 50.000000000000007
    ((contamination * n as f64) - 1e-9).ceil().max(0.0) as usize
}

pub fn fit_isolation_forest(
    x: &Matrix,
    params: IsolationForestParams,
) -> Result<IsolationForestModel, AnomalyError> {
    let n = x.rows();
    if n < 2 {
        return Err(AnomalyError::TooFewSamples { n });
    }
    if params.n_trees == 0 {
        return Err(AnomalyError::BadParams("n_trees must be positive".into()));
    }
    if !(params.contamination > 0.0 && params.contamination <= 0.5) {
        return Err(AnomalyError::BadParams(format!(
            "contamination {} outside (0, 0.5]",
            params.contamination
        )));
    }
    if params.subsample_size < 2 {
        return Err(AnomalyError::BadParams("subsample_size must be at least 2".into()));
    }
    if !x.is_finite() {
        return Err(AnomalyError::NonFinite);
    }
    let all_constant = (0..x.cols()).all(|f| {
        let first = x[(0, f)];
        (1..n).all(|i| x[(i, f)] == first)
    });
    if all_constant {
        return Err(AnomalyError::AllFeaturesConstant);
    }

    let psi = params.subsample_size.min(n);
    let height_limit = (psi as f64).log2().ceil() as usize;
    let trees: Vec<IsolationTree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = keyed_rng(params.seed, &[KEY_SAMPLE, t as u64]);
            let mut rows = sample(&mut rng, n, psi).into_vec();
            rows.sort_unstable();
            IsolationTree::grow(x, rows, height_limit, params.seed, t as u64)
        })
        .collect();

    let mut model = IsolationForestModel {
        trees,
        n_features: x.cols(),
        subsample_size: psi,
        contamination: params.contamination,
        offset: 0.0,
        params,
    };
    let raw: Vec<f64> = x.iter_rows().map(|r| 0.5 - model.score_row(r)).collect();
    model.offset = calibrate_offset(&raw, calibrated_flag_count(params.contamination, n));
    Ok(model)
}

/// Offset placing exactly the `m` smallest raw values strictly below it.
///
/// A tie group straddling the boundary cannot be split by a scalar offset;
/// the offset then sits above the whole group, flagging all of it.
fn calibrate_offset(raw: &[f64], m: usize) -> f64 {
    let mut v = raw.to_vec();
    v.sort_by(f64::total_cmp);
    if m == 0 {
        return v[0] - 1.0;
    }
    let last_in = v[m - 1];
    match v[m..].iter().find(|&&u| u > last_in) {
        Some(&next) => last_in + (next - last_in) * 0.5,
        None => last_in + 1.0,
    }
}

impl IsolationForestModel {
    /// Mean path length over trees.
    pub fn expected_path_length(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(row)).sum::<f64>() / self.trees.len() as f64
    }

    /// Anomaly score `2^(-E(h) / c(psi))`, in (0, 1); higher is more anomalous.
    pub fn score_row(&self, row: &[f64]) -> f64 {
        let norm = c(self.subsample_size);
        2f64.powf(-self.expected_path_length(row) / norm)
    }

    /// `(0.5 - s) - offset`; more negative is more anomalous.
    pub fn decision_row(&self, row: &[f64]) -> f64 {
        0.5 - self.score_row(row) - self.offset
    }
}

/// Decision values for every row of `x`.
pub fn anomaly_scores(model: &IsolationForestModel, x: &Matrix) -> Result<Vec<f64>, AnomalyError> {
    if x.cols() != model.n_features {
        return Err(AnomalyError::DimensionMismatch {
            expected: model.n_features,
            found: x.cols(),
        });
    }
    Ok(x.iter_rows().map(|r| model.decision_row(r)).collect())
}
