//! HTTP API over the survey engine and the therapy recommender.
//!
//! Datasets are held as a base frequency table plus a history of table
//! operations; the current table is always `replay(base, history)`. Raw
//! records are tallied on upload and then dropped, so every response is an
//! aggregate.

mod error;
mod state;

pub use error::{ApiError, ErrorBody};
pub use state::{AppState, CohortEntry, DatasetEntry, SnapshotError};

use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::sync::Arc;
use watson_core::knn::{self, Direction, RecommendParams, SchemaFile, Weighting};
use watson_core::library::{questions_view, render_view};
use watson_core::plots::{Palette, PlotKind, PlotOptions, PlotSpec};
use watson_core::{FreqTable, QuestionConfig, TableOp};

/// Uploads carry whole CSV files inside JSON.
pub const MAX_BODY_BYTES: usize = 256 * 1024 * 1024;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/datasets", post(upload_dataset).get(list_datasets))
        .route("/datasets/{id}/schema", get(dataset_schema))
        .route("/datasets/{id}/ops", post(apply_op))
        .route("/datasets/{id}/ops/undo", post(undo_op))
        .route("/datasets/{id}/plot", get(plot))
        .route("/datasets/{id}/questions", get(questions))
        .route("/cohorts", post(upload_cohort))
        .route("/cohorts/{id}/recommend", post(recommend))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// Serve until `shutdown` resolves, then write a snapshot if the state has a
/// data directory.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    if let Err(e) = state.save_snapshot() {
        tracing::error!("snapshot failed: {e}");
        return Err(std::io::Error::other(e.to_string()));
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
pub struct UploadDataset {
    pub csv: String,
    /// Codebook as a JSON object or as a JSON-encoded string.
    #[serde(default)]
    pub codebook: Option<Value>,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableSummary {
    pub name: String,
    pub categories: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    pub totals: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableSummary {
    pub id: String,
    pub name: String,
    pub total: u64,
    pub variables: Vec<VariableSummary>,
    pub history: Vec<TableOp>,
}

fn summarize(id: &str, entry: &DatasetEntry) -> TableSummary {
    let t: &FreqTable = &entry.current;
    TableSummary {
        id: id.to_owned(),
        name: entry.name.clone(),
        total: t.total(),
        variables: t
            .variables()
            .iter()
            .enumerate()
            .map(|(axis, v)| VariableSummary {
                name: v.name.clone(),
                categories: v.categories.clone(),
                scores: v.scores.clone(),
                totals: t.axis_totals(axis),
            })
            .collect(),
        history: entry.history.clone(),
    }
}

async fn upload_dataset(
    State(state): State<Arc<AppState>>,
    Json(req): Json<UploadDataset>,
) -> Result<(StatusCode, Json<TableSummary>), ApiError> {
    let codebook = match req.codebook {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s),
        Some(other) => Some(other.to_string()),
    };
    let base = watson_core::load_table(req.csv.as_bytes(), codebook.as_deref())?;
    let (id, entry) = state.insert_dataset(req.name.unwrap_or_else(|| "dataset".into()), base);
    let summary = summarize(&id, &entry.lock().expect("dataset lock"));
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn list_datasets(State(state): State<Arc<AppState>>) -> Json<Vec<String>> {
    Json(state.dataset_ids())
}

async fn dataset_schema(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<TableSummary>, ApiError> {
    let entry = state.dataset(&id)?;
    let guard = entry.lock().expect("dataset lock");
    Ok(Json(summarize(&id, &guard)))
}

async fn apply_op(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: axum::body::Bytes,
) -> Result<Json<TableSummary>, ApiError> {
    let op: TableOp = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request("InvalidOp", e.to_string()))?;
    let entry = state.dataset(&id)?;
    let mut guard = entry.lock().expect("dataset lock");
    guard.apply(op)?;
    Ok(Json(summarize(&id, &guard)))
}

async fn undo_op(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<TableSummary>, ApiError> {
    let entry = state.dataset(&id)?;
    let mut guard = entry.lock().expect("dataset lock");
    if !guard.undo()? {
        return Err(ApiError::bad_request("NothingToUndo", "history is empty"));
    }
    Ok(Json(summarize(&id, &guard)))
}

fn split_vars(vars: &str) -> Vec<String> {
    vars.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

#[derive(Debug, Deserialize)]
pub struct PlotQuery {
    pub vars: String,
    pub bar_var: Option<String>,
    pub panel_var: Option<String>,
    pub width: Option<u32>,
    pub height: Option<u32>,
    pub palette: Option<Palette>,
    pub show_scales: Option<bool>,
    pub title: Option<String>,
}

/// The spec a plot request resolves to; shared with in-process callers.
pub fn plot_spec(dataset: &str, q: &PlotQuery) -> Result<PlotSpec, ApiError> {
    let vars = split_vars(&q.vars);
    let kind = PlotKind::for_arity(vars.len()).ok_or_else(|| {
        ApiError::bad_request("WrongArity", format!("plots take 1 to 3 variables, got {}", vars.len()))
    })?;
    let defaults = PlotOptions::default();
    Ok(PlotSpec {
        dataset: dataset.to_owned(),
        bar_var: q.bar_var.clone(),
        panel_var: q.panel_var.clone(),
        options: PlotOptions {
            width_px: q.width.unwrap_or(defaults.width_px),
            height_px: q.height.unwrap_or(defaults.height_px),
            palette: q.palette.unwrap_or(defaults.palette),
            show_scales: q.show_scales.unwrap_or(defaults.show_scales),
            title: q.title.clone(),
        },
        ..PlotSpec::new(kind, vars)
    })
}

async fn plot(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<PlotQuery>,
) -> Result<Response, ApiError> {
    let (table, name) = state.current_table(&id)?;
    let spec = plot_spec(&name, &q)?;
    let doc = tokio::task::spawn_blocking(move || render_view(&table, &spec))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], doc.xml).into_response())
}

#[derive(Debug, Deserialize)]
pub struct QuestionQuery {
    pub vars: String,
    pub bar_var: Option<String>,
    pub max_q: Option<usize>,
}

async fn questions(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<QuestionQuery>,
) -> Result<Json<Vec<watson_core::Question>>, ApiError> {
    let (table, _) = state.current_table(&id)?;
    let vars = split_vars(&q.vars);
    let config = QuestionConfig {
        max_q: q.max_q.unwrap_or(QuestionConfig::default().max_q),
        ..QuestionConfig::default()
    };
    let list = tokio::task::spawn_blocking(move || questions_view(&table, &vars, q.bar_var.as_deref(), &config))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;
    Ok(Json(list))
}

#[derive(Debug, Deserialize)]
pub struct UploadCohort {
    pub csv: String,
    pub schema: SchemaFile<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortSummary {
    pub id: String,
    pub n_patients: usize,
    pub therapies: Vec<String>,
    pub support: Vec<usize>,
    pub direction: Direction,
    pub features: Vec<knn::FeatureSpec<f64>>,
}

async fn upload_cohort(
    State(state): State<Arc<AppState>>,
    Json(req): Json<UploadCohort>,
) -> Result<(StatusCode, Json<CohortSummary>), ApiError> {
    let schema = knn::FeatureSchema {
        features: req.schema.features,
    };
    let cohort = knn::load_cohort_csv(req.csv.as_bytes(), schema)?;
    let (id, entry) = state.insert_cohort(cohort, req.schema.direction);
    let c = &entry.cohort;
    Ok((
        StatusCode::CREATED,
        Json(CohortSummary {
            id,
            n_patients: c.patients.len(),
            support: c.therapies.iter().map(|t| c.support(t)).collect(),
            therapies: c.therapies.clone(),
            direction: entry.direction,
            features: c.schema.features.clone(),
        }),
    ))
}

#[derive(Debug, Deserialize)]
pub struct RecommendRequest {
    /// `{"id"?, "features": {...}}` or a bare feature map.
    pub patient: Value,
    pub k: Option<usize>,
    pub k_min: Option<usize>,
    pub direction: Option<Direction>,
    pub weighting: Option<Weighting>,
}

async fn recommend(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<RecommendRequest>,
) -> Result<Json<watson_core::Recommendation>, ApiError> {
    let entry = state.cohort(&id)?;
    let patient = knn::patient_from_json(&req.patient.to_string(), &entry.cohort.schema)?;
    let defaults = RecommendParams::default();
    let params = RecommendParams {
        k: req.k.unwrap_or(defaults.k),
        k_min: req.k_min.unwrap_or(defaults.k_min),
        direction: req.direction.unwrap_or(entry.direction),
        weighting: req.weighting.unwrap_or(defaults.weighting),
    };
    Ok(Json(knn::recommend(&entry.cohort, &patient, &params)?))
}
