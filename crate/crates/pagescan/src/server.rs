//! HTTP service: collections, search, benchmark runs and page images.
//!
//! All bodies are JSON except document uploads (embedding-file bytes) and
//! page images (PNG). Every failure is an [`ApiError`] body
//! `{"code", "message", "detail"}` with `code` from [`ERROR_CODES`].

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, PoisonError, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use pagescan_core::eval::{run_benchmark, BenchmarkQuery, Category, GroundTruth, RunOptions};
use pagescan_core::index::{validate_cutoffs, DEFAULT_CANDIDATES, DEFAULT_K};
use pagescan_core::{Catalog, Collection, Metric, MultiVector, PageRef, QueryEmbedding, RankedResult, SearchRequest};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use crate::client::Embedder;
use crate::report::ReportDoc;

pub const ERROR_CODES: [&str; 15] = [
    "collection_exists",
    "collection_not_found",
    "invalid_metric",
    "dims_mismatch",
    "validation_error",
    "bad_format",
    "empty_collection",
    "embedder_unavailable",
    "benchmark_not_registered",
    "run_not_found",
    "invalid_subset",
    "page_not_found",
    "route_not_found",
    "method_not_allowed",
    "internal",
];

const UPLOAD_LIMIT: usize = 4 << 30;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), detail: None }
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    fn validation(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "validation_error", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

#[derive(Serialize, Deserialize)]
pub struct ApiErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Option<Value>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ApiErrorBody { code: self.code.into(), message: self.message, detail: self.detail };
        (self.status, Json(body)).into_response()
    }
}

impl From<pagescan_core::Error> for ApiError {
    fn from(e: pagescan_core::Error) -> Self {
        use pagescan_core::Error as E;
        let message = e.to_string();
        match e {
            E::DimensionMismatch { expected, found } => ApiError::new(StatusCode::BAD_REQUEST, "dims_mismatch", message)
                .with_detail(json!({"expected": expected, "found": found})),
            E::PageDimensionMismatch { page, expected, found } => {
                ApiError::new(StatusCode::BAD_REQUEST, "dims_mismatch", message).with_detail(json!({
                    "volume_id": page.volume_id(),
                    "page_number": page.page_number(),
                    "expected": expected,
                    "found": found,
                }))
            }
            E::CollectionExists(_) => ApiError::new(StatusCode::CONFLICT, "collection_exists", message),
            E::CollectionNotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "collection_not_found", message),
            E::EmptyCollection => ApiError::new(StatusCode::CONFLICT, "empty_collection", message),
            E::Embedder(_) => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "embedder_unavailable", message),
            E::InvalidShape { .. }
            | E::NonFinite { .. }
            | E::InvalidPageRef(_)
            | E::InvalidRequest(_)
            | E::EmptyRelevantSet
            | E::InvalidQuery(_) => ApiError::validation(message),
        }
    }
}

impl From<crate::Error> for ApiError {
    fn from(e: crate::Error) -> Self {
        use crate::Error as E;
        match e {
            E::Core(c) => c.into(),
            E::DimensionMismatch { entry, expected, found } => {
                ApiError::new(StatusCode::BAD_REQUEST, "dims_mismatch", e.to_string())
                    .with_detail(json!({"entry": entry, "expected": expected, "found": found}))
            }
            E::Format(_) | E::Truncated { .. } | E::Validation { .. } => {
                ApiError::new(StatusCode::BAD_REQUEST, "bad_format", e.to_string())
            }
            E::Embedder(_) => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "embedder_unavailable", e.to_string()),
            _ => ApiError::internal(e.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_format", format!("invalid JSON body: {e}")))
}

/// Benchmark and ground truth that runs are evaluated against.
#[derive(Clone, Debug)]
pub struct RegisteredBenchmark {
    pub queries: Vec<BenchmarkQuery>,
    pub ground_truth: GroundTruth,
}

#[derive(Clone, Debug, Default)]
pub struct ServerConfig {
    /// Embeds text queries; without it only matrix queries are accepted.
    pub embedder: Option<Embedder>,
    /// Root of `<volume_id>/<page_number>.png` images.
    pub images: Option<PathBuf>,
    pub benchmark: Option<RegisteredBenchmark>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunStatus {
    pub run_id: String,
    /// `running`, `completed` or `failed`.
    pub status: String,
    pub collections: Vec<String>,
    pub completed: usize,
    pub reports: Vec<ReportDoc>,
    pub error: Option<String>,
}

pub struct AppState {
    catalog: RwLock<Catalog>,
    config: ServerConfig,
    runs: Mutex<BTreeMap<String, RunStatus>>,
    next_run: AtomicU64,
    run_queue: tokio::sync::Mutex<()>,
}

impl AppState {
    pub fn new(catalog: Catalog, config: ServerConfig) -> Arc<Self> {
        Arc::new(Self {
            catalog: RwLock::new(catalog),
            config,
            runs: Mutex::new(BTreeMap::new()),
            next_run: AtomicU64::new(1),
            run_queue: tokio::sync::Mutex::new(()),
        })
    }

    fn snapshot(&self, name: &str) -> ApiResult<Arc<Collection>> {
        Ok(self.catalog.read().unwrap_or_else(PoisonError::into_inner).snapshot(name)?)
    }

    fn update_run(&self, id: &str, f: impl FnOnce(&mut RunStatus)) {
        if let Some(r) = self.runs.lock().unwrap_or_else(PoisonError::into_inner).get_mut(id) {
            f(r);
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/collections", post(create_collection).get(list_collections))
        .route("/collections/{name}/documents", put(upload_documents))
        .route("/collections/{name}/search", post(search))
        .route("/benchmark/runs", post(start_run))
        .route("/benchmark/runs/{id}", get(get_run))
        .route("/pages/{volume_id}/{file}", get(page_image))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "route_not_found", "no such route") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this route")
        })
        .layer(DefaultBodyLimit::max(UPLOAD_LIMIT))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

async fn health(State(s): State<Arc<AppState>>) -> Json<Value> {
    let collections = s.catalog.read().unwrap_or_else(PoisonError::into_inner).len();
    Json(json!({
        "status": "ok",
        "collections": collections,
        "embedder": s.config.embedder.as_ref().map(Embedder::model_id),
        "benchmark_queries": s.config.benchmark.as_ref().map(|b| b.queries.len()),
    }))
}

#[derive(Deserialize)]
struct CreateCollection {
    name: String,
    metric: String,
    dims: usize,
}

#[derive(Serialize, Deserialize)]
pub struct CollectionInfo {
    pub name: String,
    pub metric: String,
    pub dims: usize,
    pub size: usize,
}

impl From<&Collection> for CollectionInfo {
    fn from(c: &Collection) -> Self {
        Self { name: c.name().into(), metric: c.metric().as_str().into(), dims: c.dims(), size: c.len() }
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.len() <= 128 && name.bytes().all(|b| b.is_ascii_alphanumeric() || b"_-.".contains(&b))
}

fn parse_metric(s: &str) -> ApiResult<Metric> {
    s.parse().map_err(|e: <Metric as std::str::FromStr>::Err| {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_metric", format!("`{s}`: {e}"))
            .with_detail(json!({"allowed": Metric::ALL.map(Metric::as_str)}))
    })
}

async fn create_collection(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<CollectionInfo>)> {
    let req: CreateCollection = parse_json(&body)?;
    let metric = parse_metric(&req.metric)?;
    if !valid_name(&req.name) {
        return Err(ApiError::validation("collection name must be 1-128 characters of [A-Za-z0-9_.-]"));
    }
    if req.dims == 0 {
        return Err(ApiError::validation("dims must be at least 1"));
    }
    let created = s.catalog.write().unwrap_or_else(PoisonError::into_inner).create_collection(&req.name, metric, req.dims)?;
    Ok((StatusCode::CREATED, Json(created.as_ref().into())))
}

async fn list_collections(State(s): State<Arc<AppState>>) -> Json<Vec<CollectionInfo>> {
    let catalog = s.catalog.read().unwrap_or_else(PoisonError::into_inner);
    Json(catalog.iter().map(|c| c.as_ref().into()).collect())
}

async fn upload_documents(State(s): State<Arc<AppState>>, Path(name): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    s.snapshot(&name)?;
    let entries = tokio::task::spawn_blocking(move || crate::format::decode_embeddings(&body))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    let mut catalog = s.catalog.write().unwrap_or_else(PoisonError::into_inner);
    let upserted = catalog.upsert(&name, entries)?;
    let size = catalog.snapshot(&name)?.len();
    Ok(Json(json!({"collection": name, "upserted": upserted, "size": size})))
}

#[derive(Serialize, Deserialize)]
pub struct MatrixBody {
    pub rows: usize,
    pub dims: usize,
    pub data: Vec<f32>,
}

#[derive(Deserialize)]
struct SearchBody {
    text: Option<String>,
    matrix: Option<MatrixBody>,
    query_id: Option<String>,
    k: Option<usize>,
    candidates: Option<usize>,
    #[serde(default)]
    explain: bool,
}

#[derive(Serialize, Deserialize)]
pub struct TokenDoc {
    pub token_index: usize,
    pub best_patch_index: usize,
    pub best_similarity: f64,
}

#[derive(Serialize, Deserialize)]
pub struct ExplanationDoc {
    pub total: f64,
    pub per_token: Vec<TokenDoc>,
}

#[derive(Serialize, Deserialize)]
pub struct HitDoc {
    pub rank: usize,
    pub volume_id: String,
    pub page_number: u32,
    pub raw_score: f64,
    pub normalized_score: f64,
    pub image_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explanation: Option<ExplanationDoc>,
}

#[derive(Serialize, Deserialize)]
pub struct SearchResponse {
    pub collection: String,
    pub metric: String,
    pub query_id: String,
    pub query_rows: usize,
    pub k: usize,
    pub candidates: usize,
    pub results: Vec<HitDoc>,
}

fn percent_encode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-_.~".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

fn image_url(images: Option<&std::path::Path>, page: &PageRef) -> Option<String> {
    let root = images?;
    crate::ingest::image_path(root, page)
        .is_file()
        .then(|| format!("/pages/{}/{}.png", percent_encode(page.volume_id()), page.page_number()))
}

async fn search(State(s): State<Arc<AppState>>, Path(name): Path<String>, body: Bytes) -> ApiResult<Json<SearchResponse>> {
    let req: SearchBody = parse_json(&body)?;
    let collection = s.snapshot(&name)?;
    let query_id = req.query_id.unwrap_or_else(|| "query".into());
    let embedding = match (req.text, req.matrix) {
        (Some(text), None) => {
            if text.trim().is_empty() {
                return Err(ApiError::validation("query text is empty"));
            }
            let embedder = s.config.embedder.as_ref().ok_or_else(|| {
                ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "embedder_unavailable", "server has no embedder configured")
            })?;
            embedder.embed_text(&text).await?
        }
        (None, Some(m)) => MultiVector::new(m.rows, m.dims, m.data)?,
        _ => return Err(ApiError::validation("provide exactly one of `text` or `matrix`")),
    };
    let request = SearchRequest::new(QueryEmbedding::new(query_id.clone(), embedding))
        .with_k(req.k.unwrap_or(DEFAULT_K))
        .with_candidates(req.candidates.unwrap_or(DEFAULT_CANDIDATES))
        .with_explain(req.explain);
    request.validate()?;
    let (k, candidates, query_rows) = (request.k, request.candidates, request.query.embedding.rows());
    let searched = collection.clone();
    let ranked: RankedResult = tokio::task::spawn_blocking(move || searched.search(&request))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    let images = s.config.images.as_deref();
    let results = ranked
        .entries
        .into_iter()
        .map(|e| HitDoc {
            rank: e.rank,
            image_url: image_url(images, &e.page),
            volume_id: e.page.volume_id().into(),
            page_number: e.page.page_number(),
            raw_score: e.raw_score,
            normalized_score: e.normalized_score,
            explanation: e.explanation.map(|x| ExplanationDoc {
                total: x.total,
                per_token: x
                    .per_token
                    .iter()
                    .map(|t| TokenDoc {
                        token_index: t.token_index,
                        best_patch_index: t.best_patch_index,
                        best_similarity: t.best_similarity,
                    })
                    .collect(),
            }),
        })
        .collect();
    Ok(Json(SearchResponse {
        collection: collection.name().into(),
        metric: collection.metric().as_str().into(),
        query_id,
        query_rows,
        k,
        candidates,
        results,
    }))
}

#[derive(Deserialize)]
struct RunBody {
    /// Defaults to every collection, in name order.
    collections: Option<Vec<String>>,
    subset: Option<Vec<String>>,
    k: Option<usize>,
    candidates: Option<usize>,
}

async fn start_run(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<RunStatus>)> {
    let req: RunBody = parse_json(if body.is_empty() { b"{}" } else { &body })?;
    let bench = s.config.benchmark.clone().ok_or_else(|| {
        ApiError::new(StatusCode::CONFLICT, "benchmark_not_registered", "server was started without a benchmark")
    })?;
    let subset = match req.subset {
        None => None,
        Some(names) => Some(
            names
                .iter()
                .map(|n| {
                    n.parse::<Category>().map_err(|_| {
                        ApiError::new(StatusCode::BAD_REQUEST, "invalid_subset", format!("unknown category `{n}`"))
                            .with_detail(json!({"allowed": Category::ALL.map(Category::as_str)}))
                    })
                })
                .collect::<ApiResult<Vec<_>>>()?,
        ),
    };
    let options = RunOptions {
        k: req.k.unwrap_or(DEFAULT_K),
        candidates: req.candidates.unwrap_or(DEFAULT_CANDIDATES),
        subset,
    };
    validate_cutoffs(options.k, options.candidates)?;
    let collections: Vec<Arc<Collection>> = {
        let catalog = s.catalog.read().unwrap_or_else(PoisonError::into_inner);
        match req.collections {
            Some(names) => names.iter().map(|n| catalog.snapshot(n)).collect::<Result<_, _>>()?,
            None => catalog.iter().cloned().collect(),
        }
    };
    if collections.is_empty() {
        return Err(ApiError::validation("no collections to evaluate"));
    }
    let embedder = s.config.embedder.clone().ok_or_else(|| {
        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "embedder_unavailable", "server has no embedder configured")
    })?;

    let run_id = format!("run-{}", s.next_run.fetch_add(1, Ordering::Relaxed));
    let status = RunStatus {
        run_id: run_id.clone(),
        status: "running".into(),
        collections: collections.iter().map(|c| c.name().to_owned()).collect(),
        completed: 0,
        reports: Vec::new(),
        error: None,
    };
    s.runs.lock().unwrap_or_else(PoisonError::into_inner).insert(run_id.clone(), status.clone());
    tokio::spawn(execute_run(s.clone(), run_id, bench, options, collections, embedder));
    Ok((StatusCode::ACCEPTED, Json(status)))
}

async fn execute_run(
    s: Arc<AppState>,
    run_id: String,
    bench: RegisteredBenchmark,
    options: RunOptions,
    collections: Vec<Arc<Collection>>,
    embedder: Embedder,
) {
    let _queue = s.run_queue.lock().await;
    let selected: Vec<BenchmarkQuery> = bench
        .queries
        .iter()
        .filter(|q| options.subset.as_ref().is_none_or(|c| c.contains(&q.category)))
        .cloned()
        .collect();
    let embedded = Arc::new(embedder.embed_queries(&selected).await);
    let bench = Arc::new(bench);
    for collection in collections {
        let (bench, options, embedded) = (bench.clone(), options.clone(), embedded.clone());
        let result = tokio::task::spawn_blocking(move || {
            run_benchmark(&collection, &bench.queries, &bench.ground_truth, &options, embedded.as_ref())
        })
        .await;
        match result {
            Ok(Ok(mut report)) => {
                report.metadata.timestamp = Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
                let doc = ReportDoc::from(&report);
                s.update_run(&run_id, |r| {
                    r.reports.push(doc);
                    r.completed += 1;
                });
            }
            Ok(Err(e)) => return s.update_run(&run_id, |r| fail(r, e.to_string())),
            Err(e) => return s.update_run(&run_id, |r| fail(r, e.to_string())),
        }
    }
    s.update_run(&run_id, |r| r.status = "completed".into());
}

fn fail(r: &mut RunStatus, message: String) {
    r.status = "failed".into();
    r.error = Some(message);
}

async fn get_run(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<RunStatus>> {
    let runs = s.runs.lock().unwrap_or_else(PoisonError::into_inner);
    runs.get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "run_not_found", format!("no benchmark run `{id}`")))
}

async fn page_image(State(s): State<Arc<AppState>>, Path((volume_id, file)): Path<(String, String)>) -> ApiResult<Response> {
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, "page_not_found", format!("no image for {volume_id}/{file}"));
    let root = s.config.images.as_deref().ok_or_else(not_found)?;
    let number = file.strip_suffix(".png").and_then(|n| n.parse::<u32>().ok()).ok_or_else(not_found)?;
    if volume_id.contains(['/', '\\']) || volume_id == "." || volume_id == ".." {
        return Err(not_found());
    }
    let page = PageRef::new(volume_id.as_str(), number).map_err(|_| not_found())?;
    let bytes = tokio::fs::read(crate::ingest::image_path(root, &page)).await.map_err(|_| not_found())?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}
