//! HTTP API under `/v1`.

use std::sync::Arc;

use axum::extract::multipart::{MultipartError, MultipartRejection};
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::header::{CONTENT_TYPE, LOCATION};
use axum::http::{HeaderName, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use capt_core::alignment::AlignError;
use capt_core::inventory::PhoneInventory;
use capt_core::pipeline::{PipelineConfig, PipelineError};
use serde::Serialize;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::service::{run_analysis, AnalyzeError, Catalog, Provider};
use crate::store::{AttemptRecord, AttemptResult, AttemptStore};

pub const ATTEMPT_ID_HEADER: &str = "x-attempt-id";
const MAX_UPLOAD_BYTES: usize = 32 * 1024 * 1024;

pub struct AppState {
    pub catalog: Catalog,
    pub provider: Provider,
    pub inventory: Arc<PhoneInventory>,
    pub pipeline: PipelineConfig,
    pub store: AttemptStore,
}

#[derive(Debug, Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    message: String,
}

#[derive(Debug, Serialize)]
struct Envelope<'a> {
    error: ErrorBody<'a>,
}

/// Error response with the uniform `{"error": {"code", "message"}}` body.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    fn internal(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, "{}", self.message);
        }
        let body = Envelope { error: ErrorBody { code: self.code, message: self.message } };
        (self.status, Json(body)).into_response()
    }
}

impl From<AnalyzeError> for ApiError {
    fn from(e: AnalyzeError) -> Self {
        let message = e.to_string();
        match e {
            AnalyzeError::Audio(_) => Self::bad_request("invalid_audio", message),
            AnalyzeError::InvalidPpg(_) => Self::bad_request("invalid_ppg", message),
            AnalyzeError::PpgRequired => Self::bad_request("ppg_required", message),
            AnalyzeError::Provider(_) => Self::internal("provider_failed", message),
            AnalyzeError::Pipeline(PipelineError::Align(AlignError::Infeasible { .. })) => {
                Self::internal("alignment_infeasible", message)
            }
            AnalyzeError::Pipeline(_) => Self::internal("analysis_failed", message),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn list_exercises(State(state): State<Arc<AppState>>) -> impl IntoResponse {
    Json(state.catalog.summaries())
}

async fn get_exercise(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let script = state
        .catalog
        .get(&id)
        .ok_or_else(|| ApiError::not_found("unknown_exercise", format!("no exercise '{id}'")))?;
    Ok(Json(script.to_record(&state.inventory)))
}

struct Upload {
    exercise_id: Option<String>,
    audio: Option<Vec<u8>>,
    ppg: Option<String>,
}

async fn read_upload(mut multipart: Multipart) -> ApiResult<Upload> {
    let mut upload = Upload { exercise_id: None, audio: None, ppg: None };
    let bad = |e: MultipartError| ApiError::bad_request("invalid_multipart", e.body_text());
    while let Some(field) = multipart.next_field().await.map_err(bad)? {
        match field.name().unwrap_or_default() {
            "exercise_id" => upload.exercise_id = Some(field.text().await.map_err(bad)?.trim().to_string()),
            "audio" => upload.audio = Some(field.bytes().await.map_err(bad)?.to_vec()),
            "ppg" => upload.ppg = Some(field.text().await.map_err(bad)?),
            other => {
                return Err(ApiError::bad_request("invalid_multipart", format!("unexpected part '{other}'")));
            }
        }
    }
    Ok(upload)
}

async fn create_attempt(
    State(state): State<Arc<AppState>>,
    multipart: Result<Multipart, MultipartRejection>,
) -> ApiResult<Response> {
    let multipart = multipart.map_err(|e| ApiError::bad_request("invalid_multipart", e.body_text()))?;
    let upload = read_upload(multipart).await?;
    let exercise_id = upload
        .exercise_id
        .ok_or_else(|| ApiError::bad_request("missing_field", "multipart part 'exercise_id' is required"))?;
    if state.catalog.get(&exercise_id).is_none() {
        return Err(ApiError::not_found("unknown_exercise", format!("no exercise '{exercise_id}'")));
    }
    let audio = upload
        .audio
        .ok_or_else(|| ApiError::bad_request("missing_field", "multipart part 'audio' is required"))?;

    let worker = state.clone();
    let ppg = upload.ppg;
    let record = tokio::task::spawn_blocking(move || -> ApiResult<AttemptRecord> {
        let script = worker.catalog.get(&exercise_id).expect("checked above");
        let analysis = run_analysis(&audio, ppg.as_deref(), script, &worker.provider, &worker.inventory, &worker.pipeline)?;
        let record = AttemptRecord::new(&exercise_id, &audio, analysis.provider_used, analysis.outcome.into());
        worker
            .store
            .put(&record)
            .map_err(|e| ApiError::internal("storage_failed", e.to_string()))?;
        Ok(record)
    })
    .await
    .map_err(|e| ApiError::internal("analysis_failed", e.to_string()))??;

    let status = match record.result {
        AttemptResult::Analyzed(_) => StatusCode::OK,
        AttemptResult::Rejected(_) => StatusCode::UNPROCESSABLE_ENTITY,
    };
    tracing::info!(attempt = %record.attempt_id, exercise = %record.exercise_id, status = status.as_u16(), "attempt stored");
    let id = HeaderValue::from_str(&record.attempt_id).expect("ulid is ascii");
    let location = HeaderValue::from_str(&format!("/v1/attempts/{}", record.attempt_id)).expect("ascii");
    let headers = [(HeaderName::from_static(ATTEMPT_ID_HEADER), id), (LOCATION, location)];
    Ok((status, headers, Json(record.result)).into_response())
}

async fn get_attempt(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let raw = state
        .store
        .get_raw(&id)
        .map_err(|e| ApiError::internal("storage_failed", e.to_string()))?
        .ok_or_else(|| ApiError::not_found("unknown_attempt", format!("no attempt '{id}'")))?;
    Ok(([(CONTENT_TYPE, HeaderValue::from_static("application/json"))], raw).into_response())
}

async fn list_attempts(State(state): State<Arc<AppState>>) -> ApiResult<impl IntoResponse> {
    let list = state
        .store
        .list()
        .map_err(|e| ApiError::internal("storage_failed", e.to_string()))?;
    Ok(Json(list))
}

async fn fallback() -> ApiError {
    ApiError::not_found("not_found", "no such route")
}

fn cors(origins: &[String]) -> CorsLayer {
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::from(Any)
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any)
        .expose_headers([HeaderName::from_static(ATTEMPT_ID_HEADER), LOCATION])
}

pub fn router(state: Arc<AppState>, cors_origins: &[String]) -> Router {
    Router::new()
        .route("/v1/exercises", get(list_exercises))
        .route("/v1/exercises/:id", get(get_exercise))
        .route("/v1/attempts", get(list_attempts).post(create_attempt))
        .route("/v1/attempts/:id", get(get_attempt))
        .fallback(fallback)
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .layer(cors(cors_origins))
        .with_state(state)
}
