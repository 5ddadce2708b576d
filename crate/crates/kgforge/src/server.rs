//! HTTP service with in-memory, session-scoped datasets.
//!
//! Each session sits behind its own async mutex, so requests on one session
//! queue while other sessions proceed. Analysis runs on the blocking pool.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use kgforge_core::correlation::{CorrelationMatrix, CorrelationMethod};
use kgforge_core::granger::{ConfigIssue, Discovery, DiscoveryConfig};
use kgforge_core::kg::{filter, GraphError, GraphQuery, KnowledgeGraph};
use kgforge_core::preprocess::PreprocessConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex as AsyncMutex;
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;
use uuid::Uuid;

use crate::csv_io::{CsvOptions, DEFAULT_INDEX};
use crate::json::{canonical, to_json, JsonError};
use crate::pipeline::{self, Dataset, GraphRequest, IngestReport, PipelineError};
use crate::turtle::{to_turtle, DEFAULT_BASE_IRI};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(3600);
pub const DEFAULT_MAX_BODY_BYTES: usize = 256 * 1024 * 1024;

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub session_ttl: Duration,
    pub max_body_bytes: usize,
    /// Directory of the built UI bundle, served at `/`.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            session_ttl: DEFAULT_SESSION_TTL,
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            ui_dir: None,
        }
    }
}

#[derive(Debug)]
struct Session {
    dataset: Dataset,
    correlations: BTreeMap<CorrelationMethod, CorrelationMatrix>,
    discovery: Option<Discovery>,
    graph: Option<KnowledgeGraph>,
}

struct Entry {
    session: Arc<AsyncMutex<Session>>,
    expires: Instant,
}

pub struct AppState {
    sessions: Mutex<HashMap<Uuid, Entry>>,
    ttl: Duration,
}

impl AppState {
    fn insert(&self, session: Session) -> Uuid {
        let id = Uuid::new_v4();
        let entry = Entry {
            session: Arc::new(AsyncMutex::new(session)),
            expires: Instant::now() + self.ttl,
        };
        self.sessions.lock().unwrap().insert(id, entry);
        id
    }

    /// Looks up a live session and extends its lifetime.
    fn get(&self, id: &str) -> Result<Arc<AsyncMutex<Session>>, ApiError> {
        let unknown = || ApiError::new(StatusCode::NOT_FOUND, format!("unknown session `{id}`"));
        let id = Uuid::parse_str(id).map_err(|_| unknown())?;
        let mut sessions = self.sessions.lock().unwrap();
        let now = Instant::now();
        match sessions.get_mut(&id) {
            Some(e) if e.expires > now => {
                e.expires = now + self.ttl;
                Ok(e.session.clone())
            }
            Some(_) => {
                sessions.remove(&id);
                Err(unknown())
            }
            None => Err(unknown()),
        }
    }

    /// Drops expired sessions; returns how many were removed.
    pub fn evict_expired(&self) -> usize {
        let now = Instant::now();
        let mut sessions = self.sessions.lock().unwrap();
        let before = sessions.len();
        sessions.retain(|_, e| e.expires > now);
        before - sessions.len()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    issues: Vec<ConfigIssue>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    issues: &'a [ConfigIssue],
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            issues: Vec::new(),
        }
    }

    fn invalid(issues: Vec<ConfigIssue>) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            message: "invalid configuration".into(),
            issues,
        }
    }

    fn not_ready(what: &str) -> Self {
        Self::new(StatusCode::CONFLICT, what)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Csv(e) => Self::new(StatusCode::BAD_REQUEST, e.to_string()),
            PipelineError::InvalidConfig(issues) => Self::invalid(issues),
            e => Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        }
    }
}

impl From<JsonError> for ApiError {
    fn from(e: JsonError) -> Self {
        match e {
            JsonError::Parse { path, message } => {
                Self::invalid(vec![ConfigIssue::new(&path, message)])
            }
            e => Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: &self.message,
            issues: &self.issues,
        };
        let text = serde_json::to_string(&body).unwrap_or_default();
        (
            self.status,
            [(header::CONTENT_TYPE, "application/json")],
            text,
        )
            .into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

/// Parses a JSON request body; an empty body means all defaults.
fn body<T: DeserializeOwned + Default>(bytes: &[u8]) -> Result<T, ApiError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    let text = std::str::from_utf8(bytes)
        .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "request body is not UTF-8"))?;
    Ok(crate::json::parse(text)?)
}

/// Runs `f` on the blocking pool while holding the session lock.
async fn with_session<F>(state: &AppState, id: &str, f: F) -> ApiResult
where
    F: FnOnce(&mut Session) -> ApiResult + Send + 'static,
{
    let session = state.get(id)?;
    let mut guard = session.lock_owned().await;
    tokio::task::spawn_blocking(move || f(&mut guard))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UploadParams {
    /// Single-byte field delimiter, `,` by default.
    pub delimiter: Option<char>,
    /// Index column name; empty for row numbers.
    pub index_column: Option<String>,
    /// Comma-separated columns to read as categorical.
    pub categorical: Option<String>,
}

impl UploadParams {
    fn options(&self) -> Result<CsvOptions, ApiError> {
        let mut o = CsvOptions::default();
        if let Some(d) = self.delimiter {
            o.delimiter = u8::try_from(d).ok().filter(u8::is_ascii).ok_or_else(|| {
                ApiError::invalid(vec![ConfigIssue::new(
                    "delimiter",
                    "must be one ASCII character",
                )])
            })?;
        }
        o.index_column = match self.index_column.as_deref() {
            None => Some(DEFAULT_INDEX.into()),
            Some("") => None,
            Some(s) => Some(s.into()),
        };
        if let Some(c) = &self.categorical {
            o.categorical = c
                .split(',')
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
        }
        Ok(o)
    }
}

#[derive(Serialize)]
struct UploadResponse {
    session_id: String,
    #[serde(flatten)]
    report: IngestReport,
}

async fn upload(
    State(state): State<Arc<AppState>>,
    Query(params): Query<UploadParams>,
    bytes: Bytes,
) -> ApiResult {
    let options = params.options()?;
    let dataset = tokio::task::spawn_blocking(move || Dataset::load(&bytes, &options))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let report = dataset.report();
    let id = state.insert(Session {
        dataset,
        correlations: BTreeMap::new(),
        discovery: None,
        graph: None,
    });
    let body = canonical(&UploadResponse {
        session_id: id.to_string(),
        report,
    })?;
    Ok(json_response(StatusCode::CREATED, body))
}

async fn do_preprocess(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult {
    let config: PreprocessConfig = body(&bytes)?;
    with_session(&state, &id, move |s| {
        s.correlations.clear();
        s.discovery = None;
        s.graph = None;
        let report = s.dataset.preprocess(config)?;
        Ok(json_response(StatusCode::OK, canonical(report)?))
    })
    .await
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CorrelationRequest {
    method: CorrelationMethod,
}

const NOT_PREPROCESSED: &str = "dataset has not been preprocessed; POST /preprocess first";

async fn do_correlation(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult {
    let req: CorrelationRequest = body(&bytes)?;
    with_session(&state, &id, move |s| {
        let prepared = s
            .dataset
            .prepared
            .as_ref()
            .ok_or_else(|| ApiError::not_ready(NOT_PREPROCESSED))?;
        let m = pipeline::correlate(prepared, req.method)?;
        let text = canonical(&m)?;
        s.correlations.insert(req.method, m);
        Ok(json_response(StatusCode::OK, text))
    })
    .await
}

async fn do_granger(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult {
    let config: DiscoveryConfig = body(&bytes)?;
    config.validate().map_err(ApiError::invalid)?;
    with_session(&state, &id, move |s| {
        let prepared = s
            .dataset
            .prepared
            .as_ref()
            .ok_or_else(|| ApiError::not_ready(NOT_PREPROCESSED))?;
        let d = pipeline::granger(prepared, &config)?;
        let text = canonical(&d)?;
        s.discovery = Some(d);
        Ok(json_response(StatusCode::OK, text))
    })
    .await
}

async fn do_graph(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult {
    let req: GraphRequest = body(&bytes)?;
    req.validate().map_err(ApiError::invalid)?;
    with_session(&state, &id, move |s| {
        let prepared = s
            .dataset
            .prepared
            .as_ref()
            .ok_or_else(|| ApiError::not_ready(NOT_PREPROCESSED))?;
        let g = pipeline::graph(&s.dataset, prepared, &req)?;
        let text = to_json(&g)?;
        s.graph = Some(g);
        Ok(json_response(StatusCode::OK, text))
    })
    .await
}

const NO_GRAPH: &str = "no graph has been built for this session; POST /graph first";

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TurtleParams {
    base: Option<String>,
}

async fn get_turtle(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Query<TurtleParams>,
) -> ApiResult {
    with_session(&state, &id, move |s| {
        let g = s
            .graph
            .as_ref()
            .ok_or_else(|| ApiError::not_ready(NO_GRAPH))?;
        let base = params.base.as_deref().unwrap_or(DEFAULT_BASE_IRI);
        let text = to_turtle(g, base)
            .map_err(|e| ApiError::invalid(vec![ConfigIssue::new("base", e.to_string())]))?;
        Ok((
            StatusCode::OK,
            [(header::CONTENT_TYPE, "text/turtle")],
            text,
        )
            .into_response())
    })
    .await
}

async fn do_filter(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult {
    let query: GraphQuery = body(&bytes)?;
    with_session(&state, &id, move |s| {
        let g = s
            .graph
            .as_ref()
            .ok_or_else(|| ApiError::not_ready(NO_GRAPH))?;
        let out = filter(g, &query).map_err(|e| match e {
            GraphError::EmptyQuery => ApiError::invalid(vec![ConfigIssue::new(
                "",
                "at least one criterion is required",
            )]),
            GraphError::UnknownNode(n) => ApiError::invalid(vec![ConfigIssue::new(
                "nodes",
                format!("unknown node `{n}`"),
            )]),
            e => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        })?;
        Ok(json_response(StatusCode::OK, to_json(&out)?))
    })
    .await
}

/// Builds the router and its shared state.
pub fn router(config: &ServerConfig) -> (Router, Arc<AppState>) {
    let state = Arc::new(AppState {
        sessions: Mutex::new(HashMap::new()),
        ttl: config.session_ttl,
    });
    let api = Router::new()
        .route("/api/datasets", post(upload))
        .route("/api/datasets/{id}/preprocess", post(do_preprocess))
        .route("/api/datasets/{id}/correlation", post(do_correlation))
        .route("/api/datasets/{id}/granger", post(do_granger))
        .route("/api/datasets/{id}/graph", post(do_graph))
        .route("/api/datasets/{id}/graph.ttl", get(get_turtle))
        .route("/api/datasets/{id}/graph/filter", post(do_filter))
        .layer(DefaultBodyLimit::max(config.max_body_bytes))
        .with_state(state.clone());
    let app = match &config.ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    (app.layer(TraceLayer::new_for_http()), state)
}

/// Serves until Ctrl-C, evicting expired sessions in the background.
pub async fn serve(addr: std::net::SocketAddr, config: ServerConfig) -> std::io::Result<()> {
    let (app, state) = router(&config);
    let period = config
        .session_ttl
        .clamp(Duration::from_secs(1), Duration::from_secs(60));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let n = state.evict_expired();
            if n > 0 {
                tracing::info!(evicted = n, "expired sessions removed");
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
