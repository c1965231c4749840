//! Service configuration: a JSON file plus `ADEXPERT_PORT` / `ADEXPERT_CONFIG`
//! environment overrides.

use std::path::{Path, PathBuf};

use adexpert_core::anomaly::{TabularConfig, DEFAULT_MSE_THRESHOLD};
use adexpert_core::data::SyntheticSpec;
use adexpert_core::graph::{FeatureMode, ThresholdMode};
use adexpert_core::ml::ForestParams;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const ENV_PORT: &str = "ADEXPERT_PORT";
pub const ENV_CONFIG: &str = "ADEXPERT_CONFIG";

/// Decision-value threshold of the tabular gate in the service. The
/// library default of -0.3 lies below the range the calibrated forest
/// produces for 8-sigma outliers, so the service gates at 0.
pub const SERVICE_TABULAR_THRESHOLD: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    /// Chain file; an in-memory ledger when absent.
    pub ledger_path: Option<PathBuf>,
    /// Serving model file, loaded at startup when present and rewritten on retrain.
    pub model_path: Option<PathBuf>,
    /// Labeled CSV used as the base training set.
    pub seed_corpus: Option<PathBuf>,
    pub label_column: String,
    /// Generated base training set, used when `seed_corpus` is absent.
    pub synthetic_corpus: Option<SyntheticSpec>,
    pub seed: u64,
    pub forest: ForestParams,
    pub tabular: TabularConfig,
    /// Directory of `.pgm` training images for the image gate.
    pub image_corpus_dir: Option<PathBuf>,
    pub image_components: usize,
    pub image_mse_threshold: f64,
    pub graph_threshold: f64,
    pub graph_threshold_mode: ThresholdMode,
    pub graph_feature_mode: FeatureMode,
    pub holdout_fraction: f64,
    pub min_training_samples: usize,
    /// Largest accepted side of an inline matrix or image.
    pub max_payload_dim: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            ledger_path: None,
            model_path: None,
            seed_corpus: None,
            label_column: "label".into(),
            synthetic_corpus: None,
            seed: 0,
            forest: ForestParams::default(),
            tabular: TabularConfig {
                threshold: SERVICE_TABULAR_THRESHOLD,
                ..TabularConfig::default()
            },
            image_corpus_dir: None,
            image_components: 3,
            image_mse_threshold: DEFAULT_MSE_THRESHOLD,
            graph_threshold: 0.5,
            graph_threshold_mode: ThresholdMode::Absolute,
            graph_feature_mode: FeatureMode::Degree,
            holdout_fraction: 0.25,
            min_training_samples: 20,
            max_payload_dim: 256,
        }
    }
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))
    }

    /// Reads `path`, else `$ADEXPERT_CONFIG`, else defaults; then applies `$ADEXPERT_PORT`.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let from_env = std::env::var_os(ENV_CONFIG).map(PathBuf::from);
        let mut config = match path.map(Path::to_path_buf).or(from_env) {
            Some(p) => Self::from_file(&p)?,
            None => Self::default(),
        };
        if let Ok(port) = std::env::var(ENV_PORT) {
            config.port = port
                .parse()
                .map_err(|_| ServiceError::Config(format!("{ENV_PORT}={port} is not a port number")))?;
        }
        Ok(config)
    }
}
