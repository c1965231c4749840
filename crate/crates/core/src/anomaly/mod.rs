//! Off-chain data-quality gates: an isolation-forest pipeline for tabular
//! rows, a PCA reconstruction gate for images, and the smart certificates
//! recording their verdicts.

mod certificate;
mod iforest;
mod image;
mod tabular;

use thiserror::Error;

use crate::ml::MlError;

pub use certificate::{certify, certify_all, AnomalyType, GateResult, SmartCertificate};
pub use iforest::{
    anomaly_scores, c, calibrated_flag_count, fit_isolation_forest, IsolationForestModel,
    IsolationForestParams, IsolationNode, IsolationTree,
};
pub use image::{
    fit_image_gate, image_anomaly, load_image, parse_image_csv, parse_pgm, to_pgm_p2, GrayImage,
    ImageGateModel, ImageVerdict, DEFAULT_MSE_THRESHOLD,
};
pub use tabular::{
    detect_tabular, fit_tabular_gate, AnomalyReport, TabularConfig, TabularGate,
    DEFAULT_TABULAR_THRESHOLD,
};

#[derive(Debug, Error)]
pub enum AnomalyError {
    #[error("need at least 2 samples, got {n}")]
    TooFewSamples { n: usize },
    #[error("every feature is constant; no isolating split exists")]
    AllFeaturesConstant,
    #[error("input contains NaN or infinite values")]
    NonFinite,
    #[error("expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("column {index} does not exist ({n_features} features)")]
    MissingColumn { index: usize, n_features: usize },
    #[error("image size {found:?} differs from {expected:?}")]
    SizeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("pixel value {0} outside [0, 1]")]
    PixelOutOfRange(f64),
    #[error("invalid image: {0}")]
    BadImage(String),
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Ml(#[from] MlError),
}
