//! Learners used by the classification pipeline and the anomaly gates.

mod forest;
mod logistic;
mod metrics;
mod pca;
mod scaler;
mod tree;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forest::{bootstrap_sample, fit_random_forest, ForestParams, MaxFeatures, RandomForestModel};
pub use logistic::{fit_logistic, fit_logistic_model, LogisticFit, LogisticHyper, LogisticModel};
pub use metrics::{accuracy, evaluate, ClassMetrics, Metrics};
pub use pca::{fit_pca, PcaModel};
pub use scaler::{fit_scaler, ScalerParams};
pub use tree::{DecisionTree, Node};

/// Current version of the model JSON document.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MlError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("class index {class} out of range for {n_classes} classes")]
    BadClass { class: usize, n_classes: usize },
    #[error("training labels contain fewer than two classes")]
    SingleClass,
    #[error("forest needs at least one tree")]
    NoTrees,
    #[error("component count {k} outside 1..={max}")]
    ComponentsOutOfRange { k: usize, max: usize },
    #[error("model document: {0}")]
    Document(String),
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A model that can be stored as a versioned JSON document.
pub trait VersionedModel: Serialize + DeserializeOwned {
    const SCHEMA: &'static str;
}

impl VersionedModel for LogisticModel {
    const SCHEMA: &'static str = "adexpert.logistic";
}

impl VersionedModel for PcaModel {
    const SCHEMA: &'static str = "adexpert.pca";
}

impl VersionedModel for ScalerParams {
    const SCHEMA: &'static str = "adexpert.scaler";
}

#[derive(Serialize, Deserialize)]
struct ModelDocument<T> {
    schema: String,
    format_version: u32,
    model: T,
}

pub fn to_model_json<T: VersionedModel>(model: &T) -> String {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        schema: &'static str,
        format_version: u32,
        model: &'a T,
    }
    serde_json::to_string(&Doc {
        schema: T::SCHEMA,
        format_version: MODEL_FORMAT_VERSION,
        model,
    })
    .expect("model serialization cannot fail")
}

pub fn from_model_json<T: VersionedModel>(json: &str) -> Result<T, MlError> {
    let doc: ModelDocument<T> =
        serde_json::from_str(json).map_err(|e| MlError::Document(e.to_string()))?;
    if doc.schema != T::SCHEMA {
        return Err(MlError::Document(format!(
            "expected schema {}, found {}",
            T::SCHEMA,
            doc.schema
        )));
    }
    if doc.format_version != MODEL_FORMAT_VERSION {
        return Err(MlError::Document(format!(
            "unsupported format version {}",
            doc.format_version
        )));
    }
    Ok(doc.model)
}
