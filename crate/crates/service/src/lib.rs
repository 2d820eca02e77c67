//! HTTP/JSON façade over `umap-lens` for interactive lens exploration.
//!
//! All compute runs as polled jobs on one worker thread per session, so a
//! lens or layout request returns immediately with a job id and the id of
//! the resource it will produce. Reading that resource before its job is
//! done yields `409 Conflict`.

mod error;
mod state;

use std::net::SocketAddr;
use std::path::Path;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use umap_lens::{
    contrast_selection, parse_csv, Against, ColumnRole, ContrastResult, DistanceMetric, LayoutParams, LensSpec,
    MissingPolicy,
};

pub use error::ServiceError;
pub use state::{AppState, JobStatus, LayoutInit, Session};

pub const DEFAULT_MAX_UPLOAD_MB: usize = 256;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub max_upload_bytes: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { max_upload_bytes: DEFAULT_MAX_UPLOAD_MB << 20 }
    }
}

type ApiResult<T> = Result<Json<T>, ServiceError>;

pub fn router(state: AppState, config: &ServiceConfig) -> Router {
    Router::new()
        .route("/api/datasets", get(list_datasets).post(upload_dataset))
        .route("/api/models", post(create_model))
        .route("/api/models/:id", get(model_info))
        .route("/api/models/:id/lens", post(create_lens))
        .route("/api/models/:id/layout", post(create_layout))
        .route("/api/models/:id/edges", get(model_edges))
        .route("/api/models/:id/history", get(model_history))
        .route("/api/jobs/:id", get(job_status))
        .route("/api/embeddings/:id", get(embedding))
        .route("/api/contrast", post(contrast))
        .layer(DefaultBodyLimit::max(config.max_upload_bytes))
        .with_state(state)
}

/// Registers every `*.csv` in `dir` under its file stem.
pub fn preload_dir(state: &AppState, dir: &Path, policy: MissingPolicy) -> Result<Vec<String>, ServiceError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| ServiceError::BadRequest(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    paths.sort();
    let mut ids = Vec::new();
    for path in paths {
        let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let data = umap_lens::load_csv(&path, policy)
            .map_err(|e| ServiceError::Unprocessable(format!("{}: {e}", path.display())))?;
        log::info!("loaded dataset `{id}` ({} rows)", data.n_rows());
        ids.push(state.add_dataset(Some(id), data));
    }
    Ok(ids)
}

pub async fn serve(addr: SocketAddr, state: AppState, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, &config)).await
}

#[derive(Serialize)]
struct DatasetInfo {
    dataset_id: String,
    columns: Vec<String>,
    roles: Vec<ColumnRole>,
    n_rows: usize,
}

async fn list_datasets(State(app): State<AppState>) -> ApiResult<Vec<DatasetInfo>> {
    let s = app.session.read();
    Ok(Json(
        s.datasets
            .iter()
            .map(|(id, d)| DatasetInfo {
                dataset_id: id.clone(),
                columns: d.columns().to_vec(),
                roles: d.roles().to_vec(),
                n_rows: d.n_rows(),
            })
            .collect(),
    ))
}

#[derive(Deserialize, Default)]
struct UploadQuery {
    missing: Option<String>,
    /// Comma-separated column names to tag lens-only.
    lens_only: Option<String>,
    labels: Option<String>,
}

async fn upload_dataset(State(app): State<AppState>, Query(q): Query<UploadQuery>, body: Bytes) -> ApiResult<DatasetInfo> {
    let policy: MissingPolicy = match q.missing.as_deref() {
        Some(p) => p.parse().map_err(ServiceError::BadRequest)?,
        None => MissingPolicy::Error,
    };
    let mut data = parse_csv(&body[..], policy).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    let tags = [(q.lens_only, ColumnRole::LensOnly), (q.labels, ColumnRole::Label)];
    for (names, role) in tags {
        for name in names.iter().flat_map(|n| n.split(',')).filter(|n| !n.is_empty()) {
            data.set_role(name, role).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        }
    }
    let info = DatasetInfo {
        dataset_id: String::new(),
        columns: data.columns().to_vec(),
        roles: data.roles().to_vec(),
        n_rows: data.n_rows(),
    };
    let dataset_id = app.add_dataset(None, data);
    Ok(Json(DatasetInfo { dataset_id, ..info }))
}

#[derive(Deserialize)]
struct ModelRequest {
    dataset_id: String,
    #[serde(default)]
    metric: DistanceMetric,
    #[serde(default = "default_neighbors")]
    n_neighbors: usize,
}

fn default_neighbors() -> usize {
    15
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct Submitted {
    pub job_id: String,
    /// Id of the model or embedding the job will produce.
    pub result_id: String,
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("invalid request body: {e}")))
}

async fn create_model(State(app): State<AppState>, body: Bytes) -> ApiResult<Submitted> {
    let req: ModelRequest = parse_json(&body)?;
    let (job_id, result_id) = app.submit_model(&req.dataset_id, req.metric, req.n_neighbors)?;
    Ok(Json(Submitted { job_id, result_id }))
}

async fn create_lens(State(app): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Submitted> {
    app.session.read().model(&id)?;
    let spec: LensSpec = parse_json(&body)?;
    let (job_id, result_id) = app.submit_lens(&id, spec)?;
    Ok(Json(Submitted { job_id, result_id }))
}

#[derive(Deserialize)]
struct LayoutRequest {
    #[serde(flatten)]
    params: LayoutParams,
    #[serde(default = "default_init")]
    init: String,
}

fn default_init() -> String {
    "spectral".into()
}

async fn create_layout(State(app): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Submitted> {
    app.session.read().model(&id)?;
    let req: LayoutRequest = parse_json(&body)?;
    let init: LayoutInit = req.init.parse()?;
    let (job_id, result_id) = app.submit_layout(&id, req.params, init)?;
    Ok(Json(Submitted { job_id, result_id }))
}

async fn job_status(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<JobStatus> {
    let s = app.session.read();
    s.jobs.get(&id).cloned().map(Json).ok_or_else(|| ServiceError::NotFound(format!("job `{id}`")))
}

#[derive(Serialize, Deserialize)]
pub struct EmbeddingBody {
    pub model_id: String,
    pub points: Vec<[f64; 2]>,
}

async fn embedding(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<EmbeddingBody> {
    let s = app.session.read();
    let e = s.ready_embedding(&id)?;
    Ok(Json(EmbeddingBody { model_id: s.embeddings[&id].model_id.clone(), points: e.coords.clone() }))
}

#[derive(Serialize, Deserialize)]
pub struct ModelInfo {
    pub model_id: String,
    pub dataset_id: String,
    pub parent: Option<String>,
    pub lens: Option<LensSpec>,
    pub metric: DistanceMetric,
    pub k: usize,
    pub n_vertices: usize,
    pub n_edges: usize,
    pub digest: String,
}

fn info(s: &Session, id: &str) -> Result<ModelInfo, ServiceError> {
    let entry = s.model(id)?;
    let m = s.ready_model(id)?;
    Ok(ModelInfo {
        model_id: id.to_string(),
        dataset_id: entry.dataset_id.clone(),
        parent: entry.parent.clone(),
        lens: entry.lens.clone(),
        metric: entry.metric,
        k: entry.k,
        n_vertices: m.n_vertices(),
        n_edges: m.n_edges(),
        digest: m.digest(),
    })
}

async fn model_info(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<ModelInfo> {
    Ok(Json(info(&app.session.read(), &id)?))
}

#[derive(Serialize, Deserialize)]
pub struct HistoryEntry {
    pub model_id: String,
    pub lens: Option<LensSpec>,
}

/// Root first, ending at the requested model.
async fn model_history(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Vec<HistoryEntry>> {
    let s = app.session.read();
    let mut path: Vec<HistoryEntry> = s
        .lineage(&id)?
        .into_iter()
        .map(|(model_id, e)| HistoryEntry { model_id, lens: e.lens.clone() })
        .collect();
    path.reverse();
    Ok(Json(path))
}

#[derive(Deserialize)]
struct EdgeQuery {
    limit: Option<usize>,
}

#[derive(Serialize, Deserialize)]
pub struct EdgesBody {
    pub n_edges: usize,
    pub edges: Vec<[usize; 2]>,
    pub weights: Vec<f32>,
}

/// Up to `limit` undirected edges, heaviest first, ties by index pair.
async fn model_edges(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<EdgeQuery>,
) -> ApiResult<EdgesBody> {
    let m = app.session.read().ready_model(&id)?;
    let mut edges: Vec<(usize, usize, f32)> = m.edges().collect();
    edges.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    edges.truncate(q.limit.unwrap_or(usize::MAX));
    Ok(Json(EdgesBody {
        n_edges: m.n_edges(),
        edges: edges.iter().map(|&(i, j, _)| [i, j]).collect(),
        weights: edges.iter().map(|e| e.2).collect(),
    }))
}

#[derive(Deserialize)]
struct ContrastRequest {
    dataset_id: String,
    selection: Vec<usize>,
    /// Comparison group; defaults to every unselected row.
    against: Option<Vec<usize>>,
}

async fn contrast(State(app): State<AppState>, body: Bytes) -> ApiResult<ContrastResult> {
    let req: ContrastRequest = parse_json(&body)?;
    let data = app.session.read().dataset(&req.dataset_id)?;
    let against = req.against.map_or(Against::Rest, Against::Other);
    let result = tokio::task::spawn_blocking(move || contrast_selection(&data, &req.selection, &against))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
        .map_err(|e| ServiceError::Unprocessable(e.to_string()))?;
    Ok(Json(result))
}
