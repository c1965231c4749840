use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TreeSettings};
use super::{argmax, MlError, VersionedModel};
use crate::linalg::Matrix;
use crate::rng::{keyed_rng, KEY_SAMPLE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    #[default]
    Sqrt,
    Log2,
    All,
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let d = n_features as f64;
        let k = match self {
            MaxFeatures::Sqrt => d.sqrt().floor() as usize,
            MaxFeatures::Log2 => d.log2().floor() as usize,
            MaxFeatures::All => n_features,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: MaxFeatures::Sqrt,
            max_depth: None,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
    pub n_classes: usize,
    pub params: ForestParams,
}

impl VersionedModel for RandomForestModel {
    const SCHEMA: &'static str = "adexpert.random_forest";
}

/// Row indices of the bootstrap sample used by tree `tree_index`.
pub fn bootstrap_sample(n: usize, seed: u64, tree_index: usize) -> Vec<usize> {
    let mut rng = keyed_rng(seed, &[KEY_SAMPLE, tree_index as u64]);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Bagged Gini trees. Tree `t` is grown on `bootstrap_sample(n, seed, t)`
/// with per-node feature draws keyed by `(seed, t, node id)`, so the result
/// does not depend on how trees are scheduled across threads.
pub fn fit_random_forest(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    params: ForestParams,
) -> Result<RandomForestModel, MlError> {
    if x.rows() == 0 {
        return Err(MlError::EmptyDataset);
    }
    if x.rows() != y.len() {
        return Err(MlError::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    if params.n_trees == 0 {
        return Err(MlError::NoTrees);
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(MlError::BadClass { class: bad, n_classes });
    }
    let max_features = params.max_features.resolve(x.cols());
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut sample = bootstrap_sample(x.rows(), params.seed, t);
            DecisionTree::grow(
                x,
                y,
                n_classes,
                &mut sample,
                TreeSettings {
                    max_features,
                    max_depth: params.max_depth,
                    min_samples_leaf: params.min_samples_leaf,
                    seed: params.seed,
                    tree_index: t as u64,
                },
            )
        })
        .collect();
    Ok(RandomForestModel {
        trees,
        n_features: x.cols(),
        n_classes,
        params,
    })
}

impl RandomForestModel {
    /// Number of trees voting for each class.
    pub fn votes_row(&self, row: &[f64]) -> Vec<usize> {
        let mut votes = vec![0; self.n_classes];
        for t in &self.trees {
            votes[t.predict_row(row)] += 1;
        }
        votes
    }

    pub fn vote_fractions_row(&self, row: &[f64]) -> Vec<f64> {
        let n = self.trees.len() as f64;
        self.votes_row(row).into_iter().map(|v| v as f64 / n).collect()
    }

    /// Majority vote over trees; lowest class index wins ties.
    pub fn predict_row(&self, row: &[f64]) -> usize {
        let votes: Vec<f64> = self.votes_row(row).into_iter().map(|v| v as f64).collect();
        argmax(&votes)
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        assert_eq!(x.cols(), self.n_features, "forest feature count mismatch");
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }
}
