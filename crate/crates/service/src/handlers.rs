use std::collections::BTreeMap;
use std::sync::Arc;

use adexpert_core::anomaly::{
    certify, certify_all, image_anomaly, AnomalyError, AnomalyType, GateResult, GrayImage, SmartCertificate,
};
use adexpert_core::canonical::to_canonical_json;
use adexpert_core::data::{Dataset, Label};
use adexpert_core::graph::{matrix_to_feature_row, ConnectivityMatrix};
use adexpert_core::ledger::{check_file_integrity, Address, CertificateRecord, LedgerError, SubmissionRecord};
use adexpert_core::linalg::Matrix;
use adexpert_core::ml::Metrics;
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::model::{train_serving_model, ServingModel};
use crate::{settings, AcceptedRow, AppState, ServiceError};

#[derive(Debug)]
pub(crate) struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    fn internal(message: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message.to_string())
    }

    fn no_model() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "no model loaded")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<LedgerError> for ApiError {
    fn from(e: LedgerError) -> Self {
        let status = match e {
            LedgerError::EmptyBiologicalInfo | LedgerError::EmptyEvaluation | LedgerError::BadAddress => {
                StatusCode::BAD_REQUEST
            }
            LedgerError::SubmissionNotFound => StatusCode::NOT_FOUND,
            LedgerError::NotSubmitter => StatusCode::FORBIDDEN,
            LedgerError::AlreadyVerified => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Strict JSON body parsing; any schema problem is a 400.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmissionRequest {
    pub submitter: String,
    #[serde(default)]
    pub biological_features: Option<BTreeMap<String, f64>>,
    /// Square ROI correlation matrix, converted to per-ROI graph features.
    #[serde(default)]
    pub connectivity_matrix: Option<Vec<Vec<f64>>>,
    /// Grayscale pixel rows in `[0, 1]`.
    #[serde(default)]
    pub image: Option<Vec<Vec<f64>>>,
    /// Confirmed diagnosis; accepted labeled rows join the next retrain.
    #[serde(default)]
    pub label: Option<Label>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmissionStatus {
    Accepted,
    RejectedAnomalous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    /// Fraction of trees voting for each class, keyed by label name.
    pub vote_fractions: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionResponse {
    pub submission_id: u64,
    pub certificate_id: u64,
    pub certificate: SmartCertificate,
    pub status: SubmissionStatus,
    pub prediction: Option<Prediction>,
    pub model_version: u64,
    pub ledger_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    #[serde(default)]
    pub biological_features: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub connectivity_matrix: Option<Vec<Vec<f64>>>,
    /// Full feature row in model order.
    #[serde(default)]
    pub features: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub prediction: Prediction,
    pub model_version: u64,
    pub model_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyResponse {
    pub submission_id: u64,
    pub is_verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionDetail {
    pub submission: SubmissionRecord,
    pub certificates: Vec<CertificateRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrainRequest {
    /// Overrides the configured training seed for this run.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainResponse {
    pub model_version: u64,
    pub previous_version: Option<u64>,
    pub fingerprint: String,
    pub metrics: Metrics,
    pub n_train: usize,
    pub n_holdout: usize,
    pub n_submissions_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrityResponse {
    pub ok: bool,
    pub entries: usize,
    pub first_bad_index: Option<u64>,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub version: u64,
    pub fingerprint: String,
    pub feature_names: Vec<String>,
    pub metrics: Metrics,
    pub n_train: usize,
    pub n_holdout: usize,
}

fn check_dims(rows: &[Vec<f64>], cap: usize, what: &str) -> ApiResult<()> {
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    if rows.is_empty() || width == 0 {
        return Err(ApiError::bad_request(format!("{what} is empty")));
    }
    if rows.len() > cap || width > cap {
        return Err(ApiError::bad_request(format!("{what} exceeds {cap}x{cap}")));
    }
    Ok(())
}

/// Builds the model's feature row: named biological values fill the leading
/// model columns, graph features from the matrix fill the rest.
fn derive_row(
    state: &AppState,
    model: &ServingModel,
    bio: Option<&BTreeMap<String, f64>>,
    matrix: Option<&Vec<Vec<f64>>>,
) -> ApiResult<Vec<f64>> {
    let mut row = Vec::with_capacity(model.n_features());
    if let Some(bio) = bio {
        if bio.values().any(|v| !v.is_finite()) {
            return Err(ApiError::bad_request("biological features must be finite"));
        }
        let lead = model.feature_names.iter().take(bio.len());
        if bio.len() > model.n_features() || lead.clone().any(|n| !bio.contains_key(n)) {
            return Err(ApiError::unprocessable(format!(
                "biological features must name the first {} of the model's {} features",
                bio.len(),
                model.n_features()
            )));
        }
        row.extend(lead.map(|n| bio[n]));
    }
    if let Some(rows) = matrix {
        check_dims(rows, state.config.max_payload_dim, "connectivity_matrix")?;
        let cm = ConnectivityMatrix::from_rows(rows).map_err(|e| ApiError::bad_request(e.to_string()))?;
        let (_, values) = matrix_to_feature_row(
            &cm,
            state.config.graph_threshold,
            state.config.graph_threshold_mode,
            state.config.graph_feature_mode,
        )
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
        row.extend(values);
    }
    if row.len() != model.n_features() {
        return Err(ApiError::unprocessable(format!(
            "request yields {} features, model expects {}",
            row.len(),
            model.n_features()
        )));
    }
    Ok(row)
}

fn prediction(model: &ServingModel, row: &[f64]) -> Prediction {
    let (label, fractions) = model.predict(row);
    Prediction {
        label,
        vote_fractions: Label::ALL.iter().map(|l| (l.name().to_string(), fractions[l.code()])).collect(),
    }
}

fn anomaly_status(e: AnomalyError) -> ApiError {
    match e {
        AnomalyError::NonFinite | AnomalyError::PixelOutOfRange(_) | AnomalyError::BadImage(_) => {
            ApiError::bad_request(e.to_string())
        }
        AnomalyError::DimensionMismatch { .. } | AnomalyError::SizeMismatch { .. } => {
            ApiError::unprocessable(e.to_string())
        }
        other => ApiError::internal(other),
    }
}

pub(crate) async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let version = state.current_model().map(|m| m.version);
    Json(json!({ "status": "ok", "model_version": version, "ledger_entries": state.ledger_len() }))
}

pub(crate) async fn submit(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<SubmissionResponse>)> {
    let req: SubmissionRequest = parse_body(&body)?;
    let submitter = Address::parse(&req.submitter).map_err(ApiError::from)?;
    if req.biological_features.is_none() && req.connectivity_matrix.is_none() {
        return Err(ApiError::bad_request("biological_features or connectivity_matrix is required"));
    }
    let image = match &req.image {
        Some(rows) => {
            check_dims(rows, state.config.max_payload_dim, "image")?;
            Some(GrayImage::from_rows(rows).map_err(|e| ApiError::bad_request(e.to_string()))?)
        }
        None => None,
    };
    let model = state.current_model().ok_or_else(ApiError::no_model)?;
    let row = derive_row(&state, &model, req.biological_features.as_ref(), req.connectivity_matrix.as_ref())?;

    let image_verdict = match (&image, &state.image_gate) {
        (Some(img), Some(gate)) => Some(image_anomaly(gate, img).map_err(anomaly_status)?),
        (Some(_), None) => return Err(ApiError::unprocessable("no image gate is configured")),
        (None, _) => None,
    };
    let bio_info = to_canonical_json(
        &model
            .feature_names
            .iter()
            .zip(&row)
            .collect::<BTreeMap<_, _>>(),
    )
    .map_err(ApiError::internal)?;

    let mut ledger = state.ledger.lock().expect("ledger lock poisoned");
    let next_id = ledger.submissions().len();
    let report = model.gate.report(next_id, &row).map_err(anomaly_status)?;
    let mut gates = vec![GateResult::Tabular {
        threshold: model.gate.threshold,
        report,
    }];
    gates.extend(image_verdict.map(GateResult::Image));
    let certificate = match gates.as_slice() {
        [single] => certify(single, state.clock.as_ref()),
        many => certify_all(many, state.clock.as_ref()),
    };
    let accepted = certificate.anomaly_type == AnomalyType::None;
    let prediction = accepted.then(|| prediction(&model, &row));
    let evaluation = match &prediction {
        Some(p) => p.label.name().to_string(),
        None => "rejected_anomalous".to_string(),
    };
    let submission_id = ledger.submit_data(&submitter, &bio_info, &evaluation, state.clock.as_ref())?;
    let certificate_id = ledger.record_certificate(certificate.clone(), submission_id)?;
    let ledger_length = ledger.len();
    drop(ledger);

    if let (true, Some(label)) = (accepted, req.label) {
        state.accepted.lock().expect("accepted lock poisoned").push(AcceptedRow { row, label });
    }
    let response = SubmissionResponse {
        submission_id,
        certificate_id,
        certificate,
        status: if accepted { SubmissionStatus::Accepted } else { SubmissionStatus::RejectedAnomalous },
        prediction,
        model_version: model.version,
        ledger_length,
    };
    Ok((StatusCode::CREATED, Json(response)))
}

fn bearer(headers: &HeaderMap) -> ApiResult<Address> {
    let value = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "missing bearer address"))?;
    Address::parse(value.trim()).map_err(ApiError::from)
}

pub(crate) async fn verify(
    State(state): State<Arc<AppState>>,
    Path(id): Path<u64>,
    headers: HeaderMap,
) -> ApiResult<Json<VerifyResponse>> {
    let caller = bearer(&headers)?;
    let mut ledger = state.ledger.lock().expect("ledger lock poisoned");
    ledger.verify_submission(&caller, id, state.clock.as_ref())?;
    Ok(Json(VerifyResponse { submission_id: id, is_verified: true }))
}

pub(crate) async fn get_submission(
    State(state): State<Arc<AppState>>,
    Path(id): Path<u64>,
) -> ApiResult<Json<SubmissionDetail>> {
    let ledger = state.ledger.lock().expect("ledger lock poisoned");
    let submission = ledger.submission(id).cloned().ok_or(LedgerError::SubmissionNotFound)?;
    let certificates = ledger.certificates_for(id).cloned().collect();
    Ok(Json(SubmissionDetail { submission, certificates }))
}

pub(crate) async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<PredictResponse>> {
    let req: PredictRequest = parse_body(&body)?;
    let model = state.current_model().ok_or_else(ApiError::no_model)?;
    let row = match (&req.features, &req.biological_features, &req.connectivity_matrix) {
        (Some(f), None, None) => {
            if f.len() != model.n_features() {
                return Err(ApiError::unprocessable(format!(
                    "{} features given, model expects {}",
                    f.len(),
                    model.n_features()
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(ApiError::bad_request("features must be finite"));
            }
            f.clone()
        }
        (Some(_), _, _) => return Err(ApiError::bad_request("features cannot be combined with other inputs")),
        (None, None, None) => return Err(ApiError::bad_request("no input features")),
        (None, bio, matrix) => derive_row(&state, &model, bio.as_ref(), matrix.as_ref())?,
    };
    Ok(Json(PredictResponse {
        prediction: prediction(&model, &row),
        model_version: model.version,
        model_fingerprint: model.fingerprint.clone(),
    }))
}

pub(crate) async fn model_info(State(state): State<Arc<AppState>>) -> ApiResult<Json<ModelInfo>> {
    let m = state.current_model().ok_or_else(ApiError::no_model)?;
    Ok(Json(ModelInfo {
        version: m.version,
        fingerprint: m.fingerprint.clone(),
        feature_names: m.feature_names.clone(),
        metrics: m.metrics.clone(),
        n_train: m.n_train,
        n_holdout: m.n_holdout,
    }))
}

/// Base corpus plus labeled accepted submissions.
fn training_set(state: &AppState, current: Option<&ServingModel>) -> ApiResult<(Dataset, usize)> {
    let accepted = state.accepted.lock().expect("accepted lock poisoned").clone();
    let names = match (&state.base_corpus, current) {
        (Some(ds), _) => ds.feature_names().to_vec(),
        (None, Some(m)) => m.feature_names.clone(),
        (None, None) if !accepted.is_empty() => Dataset::default_names(accepted[0].row.len()),
        (None, None) => {
            return Err(ApiError::unprocessable("no training data: no base corpus and no labeled submissions"))
        }
    };
    let width = names.len();
    let flat: Vec<f64> = accepted.iter().flat_map(|a| a.row.iter().copied()).collect();
    let extra = Dataset::new(
        Matrix::from_vec(accepted.len(), width, flat),
        accepted.iter().map(|a| a.label).collect(),
        names,
    )
    .map_err(ApiError::internal)?;
    let ds = match &state.base_corpus {
        Some(base) => base.concat(&extra).map_err(ApiError::internal)?,
        None => extra,
    };
    Ok((ds, accepted.len()))
}

pub(crate) async fn retrain(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<RetrainResponse>> {
    let req: RetrainRequest = if body.iter().all(u8::is_ascii_whitespace) {
        RetrainRequest::default()
    } else {
        parse_body(&body)?
    };
    // one retrain at a time; predictions keep using the current model meanwhile
    let _guard = state.retrain_lock.lock().await;
    let current = state.current_model();
    let (ds, n_submissions_used) = training_set(&state, current.as_deref())?;
    let version = current.as_ref().map_or(1, |m| m.version + 1);
    let worker = Arc::clone(&state);
    let trained = tokio::task::spawn_blocking(move || {
        let mut s = settings(&worker.config);
        if let Some(seed) = req.seed {
            s.seed = seed;
        }
        train_serving_model(&ds, s, version)
    })
    .await
    .map_err(ApiError::internal)?;
    let model = match trained {
        Ok(m) => m,
        Err(e @ ServiceError::InsufficientData { .. }) => return Err(ApiError::unprocessable(e.to_string())),
        Err(e) => return Err(ApiError::internal(e)),
    };
    if let Some(path) = &state.config.model_path {
        model.save(path).map_err(ApiError::internal)?;
    }
    let response = RetrainResponse {
        model_version: model.version,
        previous_version: current.map(|m| m.version),
        fingerprint: model.fingerprint.clone(),
        metrics: model.metrics.clone(),
        n_train: model.n_train,
        n_holdout: model.n_holdout,
        n_submissions_used,
    };
    *state.model.write().expect("model lock poisoned") = Some(Arc::new(model));
    Ok(Json(response))
}

/// Re-reads the chain file when there is one, so on-disk damage is reported.
pub(crate) async fn integrity(State(state): State<Arc<AppState>>) -> ApiResult<Json<IntegrityResponse>> {
    let ledger = state.ledger.lock().expect("ledger lock poisoned");
    let outcome = match ledger.path() {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(ApiError::internal)?;
            check_file_integrity(&bytes)
        }
        None => ledger.check_integrity().map(|()| ledger.len()),
    };
    Ok(Json(match outcome {
        Ok(entries) => IntegrityResponse { ok: true, entries, first_bad_index: None, reason: None },
        Err(f) => IntegrityResponse {
            ok: false,
            entries: ledger.len(),
            first_bad_index: Some(f.first_bad_index),
            reason: Some(f.reason),
        },
    }))
}
