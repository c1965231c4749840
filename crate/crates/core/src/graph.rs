//! Connectivity matrices to per-ROI degree features.
//!
//! Matrices are binarized with a threshold before degree counting. The
//! threshold and sign mode are configuration: results depend on them.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;
use crate::linalg::Matrix;

pub const SYMMETRY_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_TAU: f64 = 0.3;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}, column {col}: `{value}` is not a finite number")]
    BadNumber { row: usize, col: usize, value: String },
    #[error("matrix is not square: {rows} rows, row {row} has {cols} columns")]
    NotSquare { rows: usize, row: usize, cols: usize },
    #[error("matrix is asymmetric at ({i}, {j}): {a} vs {b}")]
    Asymmetric { i: usize, j: usize, a: f64, b: f64 },
    #[error("entry ({i}, {j}) = {value} lies outside [-1, 1]")]
    OutOfRange { i: usize, j: usize, value: f64 },
    #[error("threshold {0} must lie in [0, 1]")]
    BadThreshold(f64),
    #[error("expected {expected} ROI names, got {got}")]
    RoiNames { expected: usize, got: usize },
    #[error("matrix is empty")]
    Empty,
}

impl From<GraphError> for DataError {
    fn from(e: GraphError) -> Self {
        DataError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Edge when `|w| >= tau`.
    #[default]
    Absolute,
    /// Edge when `w >= tau`.
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Number of incident edges.
    #[default]
    Degree,
    /// Sum of `|w|` over incident edges.
    WeightedDegree,
}

/// Square symmetric ROI correlation matrix. The diagonal is never read by consumers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityMatrix {
    values: Matrix,
    roi_names: Option<Vec<String>>,
}

impl ConnectivityMatrix {
    pub fn new(values: Matrix, roi_names: Option<Vec<String>>) -> Result<Self, GraphError> {
        let n = values.rows();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        if values.cols() != n {
            return Err(GraphError::NotSquare {
                rows: n,
                row: 0,
                cols: values.cols(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                let v = values[(i, j)];
                if !v.is_finite() {
                    return Err(GraphError::BadNumber {
                        row: i,
                        col: j,
                        value: v.to_string(),
                    });
                }
                if i != j && !(-1.0..=1.0).contains(&v) {
                    return Err(GraphError::OutOfRange { i, j, value: v });
                }
                if j > i && (v - values[(j, i)]).abs() > SYMMETRY_TOLERANCE {
                    return Err(GraphError::Asymmetric {
                        i,
                        j,
                        a: v,
                        b: values[(j, i)],
                    });
                }
            }
        }
        if let Some(names) = &roi_names {
            if names.len() != n {
                return Err(GraphError::RoiNames {
                    expected: n,
                    got: names.len(),
                });
            }
        }
        Ok(Self { values, roi_names })
    }

    /// Builds from nested rows, reporting ragged input as non-square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GraphError> {
        let n = rows.len();
        if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(GraphError::NotSquare {
                rows: n,
                row,
                cols: r.len(),
            });
        }
        let m = Matrix::from_rows(rows).ok_or(GraphError::Empty)?;
        Self::new(m, None)
    }

    pub fn n_rois(&self) -> usize {
        self.values.rows()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    /// ROI names, defaulting to `roi_<i>`.
    pub fn roi_names(&self) -> Vec<String> {
        match &self.roi_names {
            Some(n) => n.clone(),
            None => (0..self.n_rois()).map(|i| format!("roi_{i}")).collect(),
        }
    }

    /// Applies a simultaneous row/column permutation: new ROI `i` is old ROI `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n_rois();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.values[(perm[i], perm[j])];
            }
        }
        Self {
            values: m,
            roi_names: self
                .roi_names
                .as_ref()
                .map(|names| perm.iter().map(|&p| names[p].clone()).collect()),
        }
    }
}

/// Loads a headerless square CSV of reals.
pub fn load_connectivity_matrix(path: impl AsRef<Path>) -> Result<ConnectivityMatrix, GraphError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_connectivity_matrix(file)
}

pub fn read_connectivity_matrix(reader: impl Read) -> Result<ConnectivityMatrix, GraphError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .enumerate()
            .map(|(col, cell)| {
                crate::data::parse_finite_cell(cell).ok_or_else(|| GraphError::BadNumber {
                    row,
                    col,
                    value: cell.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(vals);
    }
    ConnectivityMatrix::from_rows(&rows)
}

/// Binary symmetric adjacency with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjacency {
    n: usize,
    edges: Vec<bool>,
    weights: Vec<f64>,
    pub threshold_used: f64,
}

impl Adjacency {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges[i * self.n + j]
    }

    /// Unordered edge list `(i, j)` with `i < j`.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

pub fn threshold_matrix(
    cm: &ConnectivityMatrix,
    tau: f64,
    mode: ThresholdMode,
) -> Result<Adjacency, GraphError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(GraphError::BadThreshold(tau));
    }
    let n = cm.n_rois();
    let mut edges = vec![false; n * n];
    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let w = cm.values[(i, j)];
            let keep = match mode {
                ThresholdMode::Absolute => w.abs() >= tau,
                ThresholdMode::Positive => w >= tau,
            };
            if keep {
                for (a, b) in [(i, j), (j, i)] {
                    edges[a * n + b] = true;
                    weights[a * n + b] = w.abs();
                }
            }
        }
    }
    Ok(Adjacency {
        n,
        edges,
        weights,
        threshold_used: tau,
    })
}

pub fn degree_centrality(adj: &Adjacency) -> Vec<f64> {
    (0..adj.n)
        .map(|i| (0..adj.n).filter(|&j| adj.has_edge(i, j)).count() as f64)
        .collect()
}

pub fn weighted_degree(adj: &Adjacency) -> Vec<f64> {
    (0..adj.n)
        .map(|i| adj.weights[i * adj.n..(i + 1) * adj.n].iter().sum())
        .collect()
}

/// Threshold then per-ROI degree; returns `(feature names, values)`.
pub fn matrix_to_feature_row(
    cm: &ConnectivityMatrix,
    tau: f64,
    mode: ThresholdMode,
    features: FeatureMode,
) -> Result<(Vec<String>, Vec<f64>), GraphError> {
    let adj = threshold_matrix(cm, tau, mode)?;
    let values = match features {
        FeatureMode::Degree => degree_centrality(&adj),
        FeatureMode::WeightedDegree => weighted_degree(&adj),
    };
    Ok((cm.roi_names(), values))
}
