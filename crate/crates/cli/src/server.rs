//! JSON HTTP service over a [`Session`].

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use fairrank_core::session::feature_summaries;
use fairrank_core::{ComparisonRow, DatasetSchema, Error, Phase, RunConfig, Session};
use serde::{Deserialize, Serialize};

type Shared = Arc<Session>;

#[derive(Debug, Serialize)]
struct ErrorBody {
    error_code: &'static str,
    phase: Phase,
    message: String,
}

/// Every failure is a 400 carrying the engine's error code and phase.
#[derive(Debug)]
pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error_code: self.0.code(),
            phase: self.0.phase(),
            message: self.0.to_string(),
        };
        (StatusCode::BAD_REQUEST, axum::Json(body)).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(Error::InvalidConfig(msg.into()))
}

/// Pre-serialized JSON body, so records go out byte for byte as stored.
fn raw_json(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], text).into_response()
}

fn json<T: Serialize>(value: &T) -> Response {
    raw_json(serde_json::to_string(value).expect("response types serialize"))
}

type ApiResult = Result<Response, ApiError>;

pub fn router(session: Shared) -> Router {
    Router::new()
        .route("/api/datasets", post(upload_dataset))
        .route("/api/datasets/{id}/features", get(dataset_features))
        .route("/api/runs", post(create_run).get(list_runs))
        .route("/api/runs/compare", get(compare_runs))
        .route("/api/runs/{id}", get(get_run))
        .route("/api/runs/{id}/curves", get(run_curves))
        .route("/api/runs/{id}/instances/{i}", get(run_instance))
        .route("/api/runs/{id}/audit", get(run_audit))
        .with_state(session)
}

#[derive(Serialize)]
struct DatasetCreated {
    dataset_id: u64,
}

async fn upload_dataset(State(session): State<Shared>, mut form: Multipart) -> ApiResult {
    let (mut csv, mut schema) = (None, None);
    while let Some(field) = form.next_field().await.map_err(|e| bad_request(e.to_string()))? {
        let name = field.name().unwrap_or_default().to_string();
        let file = field.file_name().unwrap_or_default().to_string();
        let text = field.text().await.map_err(|e| bad_request(e.to_string()))?;
        if name == "csv" || file.ends_with(".csv") {
            csv = Some(text);
        } else if name == "schema" || name == "schema.json" || file.ends_with(".json") {
            schema = Some(text);
        }
    }
    let csv = csv.ok_or_else(|| bad_request("multipart field `csv` is missing"))?;
    let schema = DatasetSchema::from_json(&schema.ok_or_else(|| bad_request("multipart field `schema` is missing"))?)?;
    let dataset_id = tokio::task::spawn_blocking(move || session.add_dataset(&csv, schema))
        .await
        .map_err(|e| bad_request(e.to_string()))??;
    Ok(json(&DatasetCreated { dataset_id }))
}

async fn dataset_features(State(session): State<Shared>, Path(id): Path<u64>) -> ApiResult {
    let d = session.dataset(id)?;
    Ok(json(&feature_summaries(&d)?))
}

async fn create_run(State(session): State<Shared>, body: Bytes) -> ApiResult {
    let cfg: RunConfig = serde_json::from_slice(&body).map_err(|e| bad_request(format!("run config: {e}")))?;
    let run = tokio::task::spawn_blocking(move || session.create_run(&cfg))
        .await
        .map_err(|e| bad_request(e.to_string()))??;
    Ok(raw_json(run.to_json()))
}

#[derive(Serialize)]
struct RunSummary {
    run_id: u64,
    summary: ComparisonRow,
}

async fn list_runs(State(session): State<Shared>) -> ApiResult {
    let rows: Vec<RunSummary> = session
        .runs()
        .iter()
        .map(|r| RunSummary {
            run_id: r.run_id,
            summary: ComparisonRow::of(r),
        })
        .collect();
    Ok(json(&rows))
}

#[derive(Deserialize)]
struct CompareQuery {
    ids: Option<String>,
}

async fn compare_runs(State(session): State<Shared>, Query(q): Query<CompareQuery>) -> ApiResult {
    let ids = q
        .ids
        .as_deref()
        .unwrap_or_default()
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<u64>().map_err(|_| bad_request(format!("bad run id `{s}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(json(&session.compare_runs(&ids)?))
}

async fn get_run(State(session): State<Shared>, Path(id): Path<u64>) -> ApiResult {
    Ok(raw_json(session.run(id)?.to_json()))
}

async fn run_curves(State(session): State<Shared>, Path(id): Path<u64>) -> ApiResult {
    Ok(json(&session.run(id)?.report.curves))
}

async fn run_instance(State(session): State<Shared>, Path((id, i)): Path<(u64, usize)>) -> ApiResult {
    Ok(json(&session.instance_detail(id, i)?))
}

async fn run_audit(State(session): State<Shared>, Path(id): Path<u64>) -> ApiResult {
    Ok(json(&session.run(id)?.audit))
}
