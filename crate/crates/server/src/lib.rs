//! HTTP+JSON service over an actor-labeling store.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use actorlens_core::cohort::{self, CohortError, CohortMode, ProgressionSummary, DEFAULT_HISTORY_LIMIT};
use actorlens_core::events::EventKind;
use actorlens_core::metrics::MetricVector;
use actorlens_core::model::{Label, LabelRecord, LabelSource, ModelError};
use actorlens_core::projection::{self, MetricRange, ProjectionConfig, ProjectionError};
use actorlens_core::replay::{self, ReplayError};
use actorlens_core::store::{FilterSpec, MemberSelector, PlayerView, Session, Store, StoreError};
use actorlens_core::telemetry::MemberKey;

pub const DATA_DIR_ENV: &str = "ACTORLENS_DATA_DIR";
const MAX_UPLOAD_BYTES: usize = 512 * 1024 * 1024;
const HISTOGRAM_BINS: usize = 10;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
}

/// Error payload carried on the response until the outer layer renders it.
#[derive(Debug, Clone, Serialize)]
struct ErrorBody {
    code: String,
    message: String,
    path: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                path: None,
            },
        }
    }

    pub fn at(mut self, path: impl Into<String>) -> Self {
        self.body.path = Some(path.into());
        self
    }

    fn unprocessable(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    fn not_found(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut res = self.status.into_response();
        res.extensions_mut().insert(self.body);
        res
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::UnknownSession(_) => ApiError::not_found("unknown_session", msg),
            StoreError::UnknownMember(_) => ApiError::not_found("unknown_member", msg),
            StoreError::UnknownMatch(_) => ApiError::not_found("unknown_match", msg),
            StoreError::BadFilter(_) => ApiError::unprocessable("bad_filter", msg).at("filters"),
            StoreError::Busy(_) => ApiError::new(StatusCode::TOO_MANY_REQUESTS, "predict_in_progress", msg),
            StoreError::Model(m) => m.into(),
            StoreError::IoFailure { .. } | StoreError::Corrupt { .. } => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store_unavailable", msg)
            }
        }
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        let msg = e.to_string();
        match e {
            ModelError::InsufficientLabels { .. } => ApiError::new(StatusCode::CONFLICT, "insufficient_labels", msg),
            ModelError::UnknownTarget(_) | ModelError::UnknownPlayer(_) => ApiError::not_found("unknown_member", msg),
            ModelError::BadConfig(_) => ApiError::unprocessable("bad_config", msg),
        }
    }
}

impl From<CohortError> for ApiError {
    fn from(e: CohortError) -> Self {
        let msg = e.to_string();
        match e {
            CohortError::EmptySelection => ApiError::unprocessable("empty_selection", msg),
            CohortError::UnknownAnchor(_) => ApiError::not_found("unknown_anchor", msg),
            CohortError::MissingAnchor(_) => ApiError::unprocessable("missing_anchor", msg).at("anchor_match"),
            CohortError::UnknownMember(_) => ApiError::not_found("unknown_member", msg),
            CohortError::UnknownMode(_) => ApiError::unprocessable("bad_mode", msg).at("mode"),
        }
    }
}

impl From<ReplayError> for ApiError {
    fn from(e: ReplayError) -> Self {
        let msg = e.to_string();
        match e {
            ReplayError::UnknownPlayer(_) => ApiError::not_found("unknown_player", msg).at("player"),
            ReplayError::BadWindow { .. } => ApiError::unprocessable("bad_window", msg).at("from_s"),
        }
    }
}

impl From<ProjectionError> for ApiError {
    fn from(e: ProjectionError) -> Self {
        let msg = e.to_string();
        match e {
            ProjectionError::TooFewPoints(_) => ApiError::unprocessable("too_few_points", msg),
            ProjectionError::BadConfig(_) => ApiError::unprocessable("bad_config", msg),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Renders every error response as `{code, message, path}`; errors without a
/// field path report the request path.
async fn render_errors(req: Request, next: Next) -> Response {
    let request_path = req.uri().path().to_string();
    let res = next.run(req).await;
    let status = res.status();
    if !(status.is_client_error() || status.is_server_error()) {
        return res;
    }
    let (parts, body) = res.into_parts();
    let payload = match parts.extensions.get::<ErrorBody>() {
        Some(b) => b.clone(),
        None => {
            let text = to_bytes(body, 64 * 1024).await.unwrap_or_default();
            let code = match status {
                StatusCode::NOT_FOUND => "not_found",
                StatusCode::METHOD_NOT_ALLOWED => "method_not_allowed",
                StatusCode::PAYLOAD_TOO_LARGE => "payload_too_large",
                StatusCode::UNSUPPORTED_MEDIA_TYPE => "unsupported_media_type",
                s if s.is_server_error() => "internal",
                _ => "bad_request",
            };
            let message = String::from_utf8_lossy(&text).trim().to_string();
            ErrorBody {
                code: code.to_string(),
                message: if message.is_empty() { status.to_string() } else { message },
                path: None,
            }
        }
    };
    let body = json!({
        "code": payload.code,
        "message": payload.message,
        "path": payload.path.unwrap_or(request_path),
    });
    (status, Json(body)).into_response()
}

pub fn app(store: Arc<Store>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/ingest", post(ingest))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/players", get(session_players))
        .route("/sessions/{id}/projection", get(session_projection))
        .route("/sessions/{id}/lasso", post(session_lasso))
        .route("/sessions/{id}/progression", get(session_progression))
        .route("/sessions/{id}/predict", post(session_predict))
        .route("/matches/{id}/summary", get(match_summary))
        .route("/matches/{id}/replay", get(match_replay))
        .route("/matches/{id}/profile", get(match_profile))
        .route("/labels", post(post_label).get(get_labels))
        .route("/labels/export.csv", get(export_labels))
        .fallback(|| async { ApiError::not_found("not_found", "no such endpoint") })
        .layer(axum::extract::DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .layer(middleware::from_fn(render_errors))
        .with_state(AppState { store })
}

fn parse_json<T: for<'de> Deserialize<'de>>(bytes: &Bytes) -> ApiResult<T> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ApiError::unprocessable("invalid_body", e.inner().to_string()).at(if path == "." { "body".to_string() } else { path })
    })
}

fn query_param<T: std::str::FromStr>(q: &BTreeMap<String, String>, name: &str) -> ApiResult<Option<T>> {
    match q.get(name) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|_| ApiError::unprocessable("bad_query", format!("{name}: cannot parse {raw:?}")).at(name)),
    }
}

fn required<T>(v: Option<T>, name: &str) -> ApiResult<T> {
    v.ok_or_else(|| ApiError::unprocessable("missing_parameter", format!("{name} is required")).at(name))
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn ingest(State(state): State<AppState>, headers: HeaderMap, req: Request) -> ApiResult<Response> {
    let is_multipart = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let mut corpus = Vec::new();
    if is_multipart {
        let mut form = Multipart::from_request(req, &state)
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_multipart", e.body_text()))?;
        while let Some(field) = form
            .next_field()
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_multipart", e.body_text()))?
        {
            let bytes = field
                .bytes()
                .await
                .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_multipart", e.body_text()))?;
            corpus.extend_from_slice(&bytes);
            if !corpus.ends_with(b"\n") {
                corpus.push(b'\n');
            }
        }
    } else {
        let bytes = Bytes::from_request(req, &state)
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_body", e.body_text()))?;
        corpus.extend_from_slice(&bytes);
    }
    let store = state.store.clone();
    let report = tokio::task::spawn_blocking(move || store.ingest_reader(corpus.as_slice()))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(report).into_response())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MembersField {
    Keyword(String),
    List(Vec<MemberKey>),
}

#[derive(Deserialize)]
struct CreateSession {
    members: MembersField,
    #[serde(default)]
    seed: u64,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: CreateSession = parse_json(&body)?;
    let selector = match req.members {
        MembersField::Keyword(k) if k == "all" => MemberSelector::All,
        MembersField::Keyword(k) => {
            return Err(ApiError::unprocessable("invalid_body", format!("members must be \"all\" or a list, got {k:?}")).at("members"))
        }
        MembersField::List(list) => MemberSelector::Members(list),
    };
    let session = state.store.create_session(selector, req.seed)?;
    Ok((StatusCode::CREATED, Json(session)).into_response())
}

#[derive(Serialize)]
struct HistogramBin {
    lo: f64,
    hi: f64,
    count: usize,
}

#[derive(Serialize)]
struct Histogram {
    metric: &'static str,
    bins: Vec<HistogramBin>,
}

fn histograms(players: &[PlayerView]) -> Vec<Histogram> {
    (0..MetricVector::DIM)
        .map(|d| {
            let values: Vec<f64> = players.iter().map(|p| p.metrics.as_array()[d]).collect();
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let bins = if values.is_empty() {
                Vec::new()
            } else {
                let width = if hi > lo { (hi - lo) / HISTOGRAM_BINS as f64 } else { 1.0 };
                let mut counts = vec![0usize; HISTOGRAM_BINS];
                for v in &values {
                    let i = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
                    counts[i] += 1;
                }
                counts
                    .into_iter()
                    .enumerate()
                    .map(|(i, count)| HistogramBin {
                        lo: lo + width * i as f64,
                        hi: lo + width * (i + 1) as f64,
                        count,
                    })
                    .collect()
            };
            Histogram {
                metric: MetricVector::NAMES[d],
                bins,
            }
        })
        .collect()
}

#[derive(Serialize)]
struct PlayersResponse {
    session_id: String,
    filters: Vec<FilterSpec>,
    focused: usize,
    labeled: usize,
    count: usize,
    players: Vec<PlayerView>,
    histograms: Vec<Histogram>,
}

async fn session_players(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<BTreeMap<String, String>>,
) -> ApiResult<Json<PlayersResponse>> {
    let store = &state.store;
    let session = match q.get("filters") {
        Some(raw) => {
            store.session(&id)?;
            store.set_filters(&id, FilterSpec::parse_list(raw)?)?
        }
        None => store.session(&id)?,
    };
    let players = store.query_players(&id)?;
    let labeled_set = store.human_labeled();
    let labeled = session.focused.iter().filter(|k| labeled_set.contains(k)).count();
    Ok(Json(PlayersResponse {
        session_id: session.session_id,
        filters: session.filters,
        focused: session.focused.len(),
        labeled,
        count: players.len(),
        histograms: histograms(&players),
        players,
    }))
}

#[derive(Serialize)]
struct ProjectedPoint {
    member: MemberKey,
    x: f64,
    y: f64,
    metrics: MetricVector,
    label: Option<Label>,
    prediction: Option<Label>,
}

#[derive(Serialize)]
struct ProjectionResponse {
    session_id: String,
    seed: u64,
    glyph_separation: f64,
    points: Vec<ProjectedPoint>,
    normalization: Vec<MetricRange>,
}

async fn session_projection(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<BTreeMap<String, String>>,
) -> ApiResult<Json<ProjectionResponse>> {
    let session = state.store.session(&id)?;
    let seed = query_param::<u64>(&q, "seed")?.unwrap_or(session.seed);
    let players = state.store.query_players(&id)?;
    let vectors: Vec<[f64; MetricVector::DIM]> = players.iter().map(|p| p.metrics.as_array()).collect();
    let cfg = ProjectionConfig::with_seed(seed);
    let embedding = if vectors.len() < 2 {
        let (_, normalization) = projection::normalize(&vectors);
        projection::Embedding {
            points: vec![[0.0, 0.0]; vectors.len()],
            normalization,
        }
    } else {
        tokio::task::spawn_blocking(move || projection::embed(&vectors, &cfg))
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??
    };
    let points = players
        .into_iter()
        .zip(embedding.points)
        .map(|(p, [x, y])| ProjectedPoint {
            member: p.member,
            x,
            y,
            metrics: p.metrics,
            label: p.label.map(|l| l.label),
            prediction: p.prediction.map(|l| l.label),
        })
        .collect();
    Ok(Json(ProjectionResponse {
        session_id: id,
        seed,
        glyph_separation: cfg.glyph_separation,
        points,
        normalization: embedding.normalization,
    }))
}

#[derive(Deserialize)]
struct LassoBody {
    members: Vec<MemberKey>,
}

async fn session_lasso(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Session>> {
    state.store.session(&id)?;
    let req: LassoBody = parse_json(&body)?;
    Ok(Json(state.store.set_lasso(&id, req.members)?))
}

#[derive(Serialize)]
struct ProgressionResponse {
    session_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    flow_filter: Option<Value>,
    #[serde(flatten)]
    summary: ProgressionSummary,
}

async fn session_progression(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<BTreeMap<String, String>>,
) -> ApiResult<Json<ProgressionResponse>> {
    let session = state.store.session(&id)?;
    let mode: CohortMode = query_param(&q, "mode")
        .map_err(|_| ApiError::from(CohortError::UnknownMode(q.get("mode").cloned().unwrap_or_default())))?
        .unwrap_or(CohortMode::Lasso);
    let anchor = match (q.get("anchor_match"), q.get("anchor_player")) {
        (Some(m), Some(p)) => Some(MemberKey::new(m.clone(), p.clone())),
        (None, None) => None,
        (Some(_), None) => return Err(required::<()>(None, "anchor_player").unwrap_err()),
        (None, Some(_)) => return Err(required::<()>(None, "anchor_match").unwrap_err()),
    };
    let limit = query_param::<usize>(&q, "limit")?.unwrap_or(DEFAULT_HISTORY_LIMIT);
    let flow_minute = query_param::<usize>(&q, "flow_minute")?;
    let flow_from = query_param::<EventKind>(&q, "flow_from")?;
    let flow_to = query_param::<EventKind>(&q, "flow_to")?;

    let view = state.store.view();
    let mut cohort = cohort::build_cohort(mode, anchor.as_ref(), &session.lasso, &view, limit)?;
    let mut flow_filter = None;
    match (flow_minute, flow_from, flow_to) {
        (Some(t), Some(e1), Some(e2)) => {
            cohort = cohort::filter_by_flow(&cohort, &view, t, e1, e2);
            flow_filter = Some(json!({"minute": t, "from": e1, "to": e2}));
        }
        (None, None, None) => {}
        _ => {
            return Err(ApiError::unprocessable(
                "bad_query",
                "flow_minute, flow_from and flow_to must be given together",
            )
            .at("flow_minute"))
        }
    }
    let summary = cohort::progression_summary(&cohort, &view);
    Ok(Json(ProgressionResponse {
        session_id: id,
        flow_filter,
        summary,
    }))
}

#[derive(Serialize)]
struct PredictResponse {
    session_id: String,
    predictions: Vec<LabelRecord>,
}

async fn session_predict(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<PredictResponse>> {
    let store = state.store.clone();
    let sid = id.clone();
    let predictions = tokio::task::spawn_blocking(move || store.predict_session(&sid))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(PredictResponse {
        session_id: id,
        predictions,
    }))
}

fn match_or_404(state: &AppState, id: &str) -> ApiResult<Arc<actorlens_core::telemetry::MatchRecord>> {
    state
        .store
        .get_match(id)
        .ok_or_else(|| ApiError::from(StoreError::UnknownMatch(id.to_string())))
}

async fn match_summary(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<replay::MatchSummary>> {
    let m = match_or_404(&state, &id)?;
    Ok(Json(replay::match_summary(&m)))
}

async fn match_replay(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<BTreeMap<String, String>>,
) -> ApiResult<Json<replay::ReplayPayload>> {
    let m = match_or_404(&state, &id)?;
    let player: String = required(query_param(&q, "player")?, "player")?;
    let from_s = query_param::<f64>(&q, "from_s")?.unwrap_or(0.0);
    let to_s = query_param::<f64>(&q, "to_s")?.unwrap_or(m.duration_s as f64);
    Ok(Json(replay::replay(&m, &player, from_s, to_s)?))
}

async fn match_profile(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<BTreeMap<String, String>>,
) -> ApiResult<Json<replay::PlayerProfileView>> {
    let m = match_or_404(&state, &id)?;
    let player: String = required(query_param(&q, "player")?, "player")?;
    Ok(Json(replay::player_profile(&m, &player)?))
}

#[derive(Deserialize)]
struct LabelBody {
    match_id: String,
    player_id: String,
    label: String,
}

async fn post_label(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: LabelBody = parse_json(&body)?;
    let label: Label = req
        .label
        .parse()
        .map_err(|m: String| ApiError::unprocessable("invalid_label", m).at("label"))?;
    let record = state
        .store
        .put_human_label(&MemberKey::new(req.match_id, req.player_id), label)?;
    Ok((StatusCode::CREATED, Json(record)).into_response())
}

async fn get_labels(State(state): State<AppState>, Query(q): Query<BTreeMap<String, String>>) -> ApiResult<Json<Vec<LabelRecord>>> {
    let source = match q.get("source").map(String::as_str) {
        None | Some("all") => None,
        Some("human") => Some(LabelSource::Human),
        Some("model") => Some(LabelSource::Model),
        Some(other) => {
            return Err(ApiError::unprocessable("bad_query", format!("source must be human or model, got {other:?}")).at("source"))
        }
    };
    Ok(Json(state.store.get_labels(source)))
}

async fn export_labels(State(state): State<AppState>) -> Response {
    (
        [(header::CONTENT_TYPE, "text/csv; charset=utf-8")],
        Body::from(state.store.export_csv()),
    )
        .into_response()
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("port {port} is already in use")]
    PortInUse { port: u16 },
    #[error("store unavailable: {0}")]
    StoreUnavailable(String),
    #[error("server failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub port: u16,
    pub data_dir: Option<PathBuf>,
}

impl ServeConfig {
    /// Store root from the explicit directory, else the environment, else in memory.
    pub fn open_store(&self) -> Result<Store, ServeError> {
        let dir = self
            .data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from));
        match dir {
            Some(d) => Store::open_dir(d).map_err(|e| ServeError::StoreUnavailable(e.to_string())),
            None => Ok(Store::in_memory()),
        }
    }
}

pub async fn serve(cfg: ServeConfig) -> Result<(), ServeError> {
    let store = Arc::new(cfg.open_store()?);
    let addr = SocketAddr::from(([0, 0, 0, 0], cfg.port));
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            ServeError::PortInUse { port: cfg.port }
        } else {
            ServeError::Io(e)
        }
    })?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, app(store)).await?;
    Ok(())
}
