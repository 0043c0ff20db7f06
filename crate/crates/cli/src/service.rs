// SPDX-License-Identifier: MIT OR Apache-2.0

//! Read-only HTTP JSON service over one model bundle and its cohort.
//! Interventions are stateless: every request is recomputed from scratch.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cbmw_core::cbm::Prediction;
use cbmw_core::intervene::{bottleneck_correlation, run_intervention, Target};
use cbmw_core::schema::{ConceptSource, PatientRecord, ValueKind};
use cbmw_core::{Cohort, Error, InterventionRequest, ModelBundle, PropagationMode, Result, Split};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::workspace::{Report, Workspace};

/// Immutable snapshot shared by all requests.
pub struct AppState {
    pub bundle: ModelBundle,
    pub cohort: Cohort,
    pub workspace: Workspace,
}

impl AppState {
    pub fn load(ws: &Workspace, model: &str, cohort: Option<&str>) -> Result<Arc<Self>> {
        let (bundle, cohort, _) = ws.load_model_and_cohort(model, cohort)?;
        Ok(Arc::new(AppState { bundle, cohort, workspace: ws.clone() }))
    }

    fn hash(&self) -> &str {
        &self.bundle.model.schema_hash
    }

    fn record(&self, id: &str) -> Result<&PatientRecord> {
        self.cohort.find(id).ok_or_else(|| Error::UnknownRecord(id.to_string()))
    }

    fn check_hash(&self, claimed: Option<&str>) -> Result<()> {
        match claimed {
            Some(h) if h != self.hash() => {
                Err(Error::HashMismatch { expected: self.hash().to_string(), found: h.to_string() })
            }
            _ => Ok(()),
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/patients", get(list_patients))
        .route("/patients/{id}", get(get_patient))
        .route("/predict", post(predict))
        .route("/intervene", post(intervene))
        .route("/model/meta", get(model_meta))
        .route("/model/correlations", get(model_correlations))
        .route("/reports/latest", get(latest_report))
        .with_state(state)
}

pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
    schema_hash: String,
}

impl ApiError {
    fn new(state: &AppState, err: Error) -> Self {
        let status = match &err {
            Error::UnknownRecord(_) => StatusCode::NOT_FOUND,
            Error::HashMismatch { .. } => StatusCode::CONFLICT,
            Error::UnknownConcept(_)
            | Error::OutOfRange { .. }
            | Error::DuplicateIndex(_)
            | Error::Config(_)
            | Error::Dimension { .. }
            | Error::MissingInput(_)
            | Error::Data(_)
            | Error::Json(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError { status, kind: err.kind(), message: err.to_string(), schema_hash: state.hash().to_string() }
    }

    fn rejection(state: &AppState, r: JsonRejection) -> Self {
        let (status, kind) = match r {
            JsonRejection::MissingJsonContentType(_) => (StatusCode::UNSUPPORTED_MEDIA_TYPE, "content_type"),
            _ => (StatusCode::UNPROCESSABLE_ENTITY, "malformed_request"),
        };
        ApiError { status, kind, message: r.body_text(), schema_hash: state.hash().to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.kind, "message": self.message, "schema_hash": self.schema_hash });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult = std::result::Result<Json<Value>, ApiError>;

fn ok(body: impl Serialize, state: &AppState) -> ApiResult {
    serde_json::to_value(body).map(Json).map_err(|e| ApiError::new(state, e.into()))
}

/// TP, FP, TN or FN of a prediction against the label.
pub fn status(label: u8, y: u8) -> &'static str {
    match (label, y) {
        (1, 1) => "TP",
        (1, _) => "FP",
        (_, 0) => "TN",
        _ => "FN",
    }
}

#[derive(Debug, Deserialize)]
struct PatientQuery {
    split: Option<String>,
}

#[derive(Debug, Serialize)]
struct PatientSummary<'a> {
    id: &'a str,
    split: Split,
    y: u8,
    probability: f64,
    label: u8,
    status: &'static str,
}

async fn list_patients(State(s): State<Arc<AppState>>, Query(q): Query<PatientQuery>) -> ApiResult {
    let split: Option<Split> = match &q.split {
        Some(v) => Some(v.parse().map_err(|e| ApiError::new(&s, e))?),
        None => None,
    };
    let mut patients = Vec::new();
    for r in s.cohort.records.iter().filter(|r| split.is_none_or(|sp| r.split == sp)) {
        let p = s.bundle.model.predict_record(r).map_err(|e| ApiError::new(&s, e))?;
        patients.push(PatientSummary {
            id: &r.id,
            split: r.split,
            y: r.y,
            probability: p.probability,
            label: p.label,
            status: status(p.label, r.y),
        });
    }
    ok(json!({ "schema_hash": s.hash(), "patients": patients }), &s)
}

async fn get_patient(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    let r = s.record(&id).map_err(|e| ApiError::new(&s, e))?;
    let model = &s.bundle.model;
    let p = model.predict_record(r).map_err(|e| ApiError::new(&s, e))?;
    let features: serde_json::Map<String, Value> = s
        .cohort
        .schema
        .features
        .features
        .iter()
        .zip(&r.x)
        .map(|(f, v)| (f.name.clone(), json!(v)))
        .collect();
    let concepts: serde_json::Map<String, Value> = s
        .cohort
        .schema
        .concepts
        .concepts
        .iter()
        .zip(&r.concepts)
        .map(|(c, v)| (c.name.clone(), json!(v)))
        .collect();
    ok(
        json!({
            "schema_hash": s.hash(),
            "id": r.id,
            "split": r.split,
            "y": r.y,
            "features": features,
            "concepts": concepts,
            "bottleneck_names": model.bottleneck_names(),
            "true_bottleneck": model.true_bottleneck(r).map_err(|e| ApiError::new(&s, e))?,
            "prediction": p,
            "status": status(p.label, r.y),
        }),
        &s,
    )
}

#[derive(Debug, Deserialize)]
struct PredictRequest {
    id: Option<String>,
    x: Option<Vec<f64>>,
    text: Option<Vec<f64>>,
    schema_hash: Option<String>,
}

async fn predict(State(s): State<Arc<AppState>>, body: std::result::Result<Json<PredictRequest>, JsonRejection>) -> ApiResult {
    let Json(req) = body.map_err(|r| ApiError::rejection(&s, r))?;
    s.check_hash(req.schema_hash.as_deref()).map_err(|e| ApiError::new(&s, e))?;
    let model = &s.bundle.model;
    let p: Prediction = match (&req.id, &req.x) {
        (Some(id), None) => {
            let r = s.record(id).map_err(|e| ApiError::new(&s, e))?;
            model.predict_record(r)
        }
        (None, Some(x)) => {
            if let Some(v) = x.iter().chain(req.text.iter().flatten()).find(|v| !v.is_finite()) {
                return Err(ApiError::new(&s, Error::OutOfRange { name: "input".into(), value: *v }));
            }
            model.predict(x, req.text.as_deref())
        }
        _ => Err(Error::Config("give either `id` or `x`".into())),
    }
    .map_err(|e| ApiError::new(&s, e))?;
    ok(json!({ "schema_hash": s.hash(), "bottleneck_names": model.bottleneck_names(), "prediction": p }), &s)
}

/// Body of `POST /intervene`: an intervention request for one patient.
#[derive(Debug, Deserialize)]
pub struct PatientIntervention {
    pub patient: String,
    #[serde(default)]
    pub schema_hash: Option<String>,
    #[serde(flatten)]
    pub request: InterventionRequest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionResponse {
    pub schema_hash: String,
    pub patient: String,
    pub mode: PropagationMode,
    pub dry_run: bool,
    pub concepts: Vec<String>,
    pub pre_bottleneck: Vec<f64>,
    pub post_bottleneck: Vec<f64>,
    pub deltas: Vec<f64>,
    /// One flag per bottleneck coordinate.
    pub clamp_flags: Vec<bool>,
    pub clamped: Vec<String>,
    pub pre_probability: f64,
    pub pre_label: u8,
    pub post_probability: Option<f64>,
    pub post_label: Option<u8>,
}

/// Runs one patient's intervention; shared by the HTTP handler and tests.
pub fn intervene_one(state: &AppState, body: PatientIntervention) -> Result<InterventionResponse> {
    state.check_hash(body.schema_hash.as_deref())?;
    let record = state.record(&body.patient)?;
    let request = body.request.with_target(Target::All);
    let result = run_intervention(&state.bundle.model, &state.bundle.stats, &[record], &request)?;
    let r = result
        .records
        .into_iter()
        .next()
        .ok_or_else(|| Error::UnknownRecord(body.patient.clone()))?;
    Ok(InterventionResponse {
        schema_hash: result.schema_hash,
        patient: r.id,
        mode: result.mode,
        dry_run: result.dry_run,
        clamp_flags: result.concepts.iter().map(|c| r.clamped.contains(c)).collect(),
        concepts: result.concepts,
        pre_bottleneck: r.pre_bottleneck,
        post_bottleneck: r.post_bottleneck,
        deltas: r.deltas,
        clamped: r.clamped,
        pre_probability: r.pre_probability,
        pre_label: r.pre_label,
        post_probability: r.post_probability,
        post_label: r.post_label,
    })
}

async fn intervene(
    State(s): State<Arc<AppState>>,
    body: std::result::Result<Json<PatientIntervention>, JsonRejection>,
) -> ApiResult {
    let Json(body) = body.map_err(|r| ApiError::rejection(&s, r))?;
    let response = intervene_one(&s, body).map_err(|e| ApiError::new(&s, e))?;
    ok(response, &s)
}

#[derive(Debug, Serialize)]
struct ConceptMeta<'a> {
    name: &'a str,
    kind: ValueKind,
    source: ConceptSource,
    mean: f64,
    median: f64,
}

async fn model_meta(State(s): State<Arc<AppState>>) -> ApiResult {
    let model = &s.bundle.model;
    let stats = &s.bundle.stats;
    let schema = &s.cohort.schema;
    let concepts: Vec<ConceptMeta> = model
        .bottleneck_schema_indices()
        .into_iter()
        .map(|j| {
            let spec = &schema.concepts.concepts[j];
            ConceptMeta {
                name: &spec.name,
                kind: spec.kind,
                source: spec.source,
                mean: stats.concepts[j].mean,
                median: stats.concepts[j].median,
            }
        })
        .collect();
    let features: Vec<&str> = schema.features.features.iter().map(|f| f.name.as_str()).collect();
    ok(
        json!({
            "schema_hash": s.hash(),
            "format_version": model.format_version,
            "mode": model.mode,
            "regime": model.regime,
            "lambda": model.lambda,
            "train_config": s.bundle.config,
            "features": features,
            "dropped_features": stats.dropped,
            "concepts": concepts,
        }),
        &s,
    )
}

async fn model_correlations(State(s): State<Arc<AppState>>) -> ApiResult {
    let matrix = bottleneck_correlation(&s.bundle.model, &s.bundle.stats).map_err(|e| ApiError::new(&s, e))?;
    ok(
        json!({ "schema_hash": s.hash(), "concepts": s.bundle.model.bottleneck_names(), "matrix": matrix }),
        &s,
    )
}

async fn latest_report(State(s): State<Arc<AppState>>) -> std::result::Result<Json<Value>, ApiError> {
    let report: Report = s.workspace.latest_report().map_err(|e| {
        let mut err = ApiError::new(&s, e);
        err.status = StatusCode::NOT_FOUND;
        err
    })?;
    ok(json!({ "schema_hash": s.hash(), "report": report }), &s)
}
