//! HTTP front end. Submissions pass the anomaly gates off-chain, their
//! certificates are appended to the ledger, and clean rows get a prediction
//! from the current serving model.
//!
//! Callers identify themselves with `Authorization: Bearer <address>`. The
//! address is taken at face value; there is no signature check.

use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use adexpert_core::anomaly::{fit_image_gate, load_image, AnomalyError, ImageGateModel};
use adexpert_core::clock::{Clock, SystemClock};
use adexpert_core::data::{generate_synthetic, load_dataset_csv, DataError, Dataset};
use adexpert_core::ledger::{Ledger, LedgerError};
use adexpert_core::ml::MlError;
use axum::routing::{get, post};
use axum::Router;
use thiserror::Error;

mod config;
mod handlers;
mod model;

pub use config::{ServiceConfig, ENV_CONFIG, ENV_PORT, SERVICE_TABULAR_THRESHOLD};
pub use handlers::{
    IntegrityResponse, ModelInfo, Prediction, PredictRequest, PredictResponse, RetrainRequest, RetrainResponse,
    SubmissionDetail, SubmissionRequest, SubmissionResponse, SubmissionStatus, VerifyResponse,
};
pub use model::{train_serving_model, ServingModel, TrainSettings};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("not enough training rows: have {have}, need {need}")]
    InsufficientData { have: usize, need: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error(transparent)]
    Anomaly(#[from] AnomalyError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// A labeled row from an accepted submission, kept for retraining.
#[derive(Debug, Clone)]
pub(crate) struct AcceptedRow {
    pub row: Vec<f64>,
    pub label: adexpert_core::data::Label,
}

pub struct AppState {
    pub config: ServiceConfig,
    pub(crate) model: RwLock<Option<Arc<ServingModel>>>,
    pub(crate) image_gate: Option<ImageGateModel>,
    pub(crate) ledger: Mutex<Ledger>,
    pub(crate) base_corpus: Option<Dataset>,
    pub(crate) accepted: Mutex<Vec<AcceptedRow>>,
    pub(crate) retrain_lock: tokio::sync::Mutex<()>,
    pub(crate) clock: Arc<dyn Clock>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Result<Self, ServiceError> {
        Self::with_clock(config, Arc::new(SystemClock))
    }

    /// Opens the ledger, loads or trains the serving model and fits the image gate.
    pub fn with_clock(config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self, ServiceError> {
        let ledger = match &config.ledger_path {
            Some(p) => Ledger::open(p)?,
            None => Ledger::new(),
        };
        let base_corpus = match (&config.seed_corpus, &config.synthetic_corpus) {
            (Some(path), _) => Some(load_dataset_csv(path, &config.label_column)?),
            (None, Some(spec)) => Some(generate_synthetic(spec)?),
            (None, None) => None,
        };
        let stored = config.model_path.as_deref().filter(|p| p.exists());
        let model = match (stored, &base_corpus) {
            (Some(path), _) => Some(ServingModel::load(path)?),
            (None, Some(ds)) => {
                let m = train_serving_model(ds, settings(&config), 1)?;
                if let Some(p) = &config.model_path {
                    m.save(p)?;
                }
                Some(m)
            }
            (None, None) => None,
        };
        let image_gate = match &config.image_corpus_dir {
            Some(dir) => Some(load_image_gate(dir, &config)?),
            None => None,
        };
        Ok(Self {
            model: RwLock::new(model.map(Arc::new)),
            image_gate,
            ledger: Mutex::new(ledger),
            base_corpus,
            accepted: Mutex::new(Vec::new()),
            retrain_lock: tokio::sync::Mutex::new(()),
            clock,
            config,
        })
    }

    /// The model in service right now; one snapshot per request.
    pub fn current_model(&self) -> Option<Arc<ServingModel>> {
        self.model.read().expect("model lock poisoned").clone()
    }

    pub fn ledger_len(&self) -> usize {
        self.ledger.lock().expect("ledger lock poisoned").len()
    }
}

pub(crate) fn settings(config: &ServiceConfig) -> TrainSettings<'_> {
    TrainSettings {
        forest: config.forest,
        tabular: &config.tabular,
        holdout_fraction: config.holdout_fraction,
        seed: config.seed,
        min_samples: config.min_training_samples,
    }
}

fn load_image_gate(dir: &std::path::Path, config: &ServiceConfig) -> Result<ImageGateModel, ServiceError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    paths.sort();
    let images = paths.iter().map(|p| load_image(p)).collect::<Result<Vec<_>, _>>()?;
    Ok(fit_image_gate(&images, config.image_components, config.image_mse_threshold)?)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(handlers::health))
        .route("/submissions", post(handlers::submit))
        .route("/submissions/{id}", get(handlers::get_submission))
        .route("/submissions/{id}/verify", post(handlers::verify))
        .route("/predict", post(handlers::predict))
        .route("/model", get(handlers::model_info))
        .route("/admin/retrain", post(handlers::retrain))
        .route("/ledger/integrity", get(handlers::integrity))
        .with_state(state)
}

/// Binds `bind:port` and serves until the process exits.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let addr = format!("{}:{}", config.bind, config.port);
    let state = Arc::new(tokio::task::block_in_place(|| AppState::new(config))?);
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    axum::serve(listener, router(state)).await?;
    Ok(())
}
