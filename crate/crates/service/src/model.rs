//! The serving model: classifier plus tabular gate, trained together on the
//! same rows and swapped as one unit.

use std::path::Path;

use adexpert_core::anomaly::{fit_tabular_gate, TabularConfig, TabularGate};
use adexpert_core::canonical::to_canonical_json;
use adexpert_core::data::{train_test_split, Dataset, Label};
use adexpert_core::ml::{evaluate, fit_random_forest, ForestParams, Metrics, RandomForestModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServingModel {
    pub version: u64,
    pub feature_names: Vec<String>,
    pub forest: RandomForestModel,
    pub gate: TabularGate,
    /// Evaluation on the held-out slice of the training rows.
    pub metrics: Metrics,
    pub n_train: usize,
    pub n_holdout: usize,
    /// SHA-256 over the learned parameters, independent of the version number.
    #[serde(skip)]
    pub fingerprint: String,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainSettings<'a> {
    pub forest: ForestParams,
    pub tabular: &'a TabularConfig,
    pub holdout_fraction: f64,
    pub seed: u64,
    pub min_samples: usize,
}

impl ServingModel {
    pub fn compute_fingerprint(&self) -> String {
        let body = to_canonical_json(&(&self.feature_names, &self.forest, &self.gate))
            .expect("model parameters are finite");
        hex::encode(Sha256::digest(body.as_bytes()))
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// `(label, per-class vote fractions)` for one feature row.
    pub fn predict(&self, row: &[f64]) -> (Label, Vec<f64>) {
        let label = Label::from_code(self.forest.predict_row(row)).expect("three-class forest");
        (label, self.forest.vote_fractions_row(row))
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)?;
        let mut m: Self = serde_json::from_str(&text)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        m.fingerprint = m.compute_fingerprint();
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), ServiceError> {
        let json = to_canonical_json(self).expect("model parameters are finite");
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, json)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}

/// Fits the forest on a stratified training slice, scores it on the rest,
/// and fits the tabular gate on all rows.
pub fn train_serving_model(ds: &Dataset, settings: TrainSettings<'_>, version: u64) -> Result<ServingModel, ServiceError> {
    if ds.n_samples() < settings.min_samples.max(4) {
        return Err(ServiceError::InsufficientData {
            have: ds.n_samples(),
            need: settings.min_samples.max(4),
        });
    }
    let stratify = ds.class_counts().iter().all(|&c| c != 1);
    let (train, holdout) = train_test_split(ds, settings.holdout_fraction, settings.seed, stratify)?;
    let forest = fit_random_forest(
        train.features(),
        &train.label_codes(),
        Label::COUNT,
        settings.forest.with_seed(settings.seed),
    )?;
    let metrics = evaluate(&forest.predict(holdout.features()), &holdout.label_codes(), Label::COUNT)?;
    let gate = fit_tabular_gate(ds.features(), settings.tabular)?;
    let mut model = ServingModel {
        version,
        feature_names: ds.feature_names().to_vec(),
        forest,
        gate,
        metrics,
        n_train: train.n_samples(),
        n_holdout: holdout.n_samples(),
        fingerprint: String::new(),
    };
    model.fingerprint = model.compute_fingerprint();
    Ok(model)
}
