use serde::{Deserialize, Serialize};

use super::iforest::{fit_isolation_forest, IsolationForestModel, IsolationForestParams};
use super::AnomalyError;
use crate::data::Dataset;
use crate::linalg::Matrix;
use crate::ml::{fit_pca, fit_scaler, PcaModel, ScalerParams, VersionedModel};

/// Default flag threshold on the decision value.
pub const DEFAULT_TABULAR_THRESHOLD: f64 = -0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TabularConfig {
    /// Columns fed to the pipeline; `None` uses all of them.
    pub columns: Option<Vec<usize>>,
    /// PCA dimension, reduced to the column count when larger.
    pub n_components: usize,
    pub forest: IsolationForestParams,
    /// A row is flagged when its decision value is strictly below this.
    pub threshold: f64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self {
            columns: None,
            n_components: 2,
            forest: IsolationForestParams::default(),
            threshold: DEFAULT_TABULAR_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub sample_index: usize,
    /// Decision value; more negative is more anomalous.
    pub score: f64,
    pub flagged: bool,
    pub feature_snapshot: Vec<f64>,
}

/// Fitted standardize, project, isolate pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularGate {
    pub columns: Vec<usize>,
    pub scaler: ScalerParams,
    pub pca: PcaModel,
    pub forest: IsolationForestModel,
    pub threshold: f64,
}

impl VersionedModel for TabularGate {
    const SCHEMA: &'static str = "adexpert.tabular_gate";
}

pub fn fit_tabular_gate(x: &Matrix, config: &TabularConfig) -> Result<TabularGate, AnomalyError> {
    let columns = match &config.columns {
        Some(cols) => {
            if let Some(&bad) = cols.iter().find(|&&c| c >= x.cols()) {
                return Err(AnomalyError::MissingColumn { index: bad, n_features: x.cols() });
            }
            cols.clone()
        }
        None => (0..x.cols()).collect(),
    };
    if columns.is_empty() {
        return Err(AnomalyError::BadParams("no columns selected".into()));
    }
    let xs = x.select_columns(&columns);
    if xs.rows() < 2 {
        return Err(AnomalyError::TooFewSamples { n: xs.rows() });
    }
    let scaler = fit_scaler(&xs);
    let z = scaler.transform(&xs);
    let k = config.n_components.min(columns.len()).min(z.rows());
    let pca = fit_pca(&z, k)?;
    let projected = pca.project(&z);
    let forest = fit_isolation_forest(&projected, config.forest)?;
    Ok(TabularGate {
        columns,
        scaler,
        pca,
        forest,
        threshold: config.threshold,
    })
}

impl TabularGate {
    /// Width of the rows the gate was fitted on (before column selection).
    pub fn input_width(&self) -> usize {
        self.columns.iter().max().map_or(0, |m| m + 1)
    }

    /// Decision value of one full-width row.
    pub fn score_row(&self, row: &[f64]) -> Result<f64, AnomalyError> {
        if row.len() < self.input_width() {
            return Err(AnomalyError::DimensionMismatch {
                expected: self.input_width(),
                found: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(AnomalyError::NonFinite);
        }
        let selected: Vec<f64> = self.columns.iter().map(|&c| row[c]).collect();
        let z = self.scaler.transform_row(&selected);
        Ok(self.forest.decision_row(&self.pca.project_row(&z)))
    }

    pub fn report(&self, sample_index: usize, row: &[f64]) -> Result<AnomalyReport, AnomalyError> {
        let score = self.score_row(row)?;
        Ok(AnomalyReport {
            sample_index,
            score,
            flagged: score < self.threshold,
            feature_snapshot: row.to_vec(),
        })
    }
}

/// Fits the pipeline on `ds` and scores every row of it.
pub fn detect_tabular(ds: &Dataset, config: &TabularConfig) -> Result<Vec<AnomalyReport>, AnomalyError> {
    let gate = fit_tabular_gate(ds.features(), config)?;
    ds.features()
        .iter_rows()
        .enumerate()
        .map(|(i, row)| gate.report(i, row))
        .collect()
}
