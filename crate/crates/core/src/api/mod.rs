//! HTTP/JSON interface. Every error body is `{"code", "message"}`; every
//! JSON body is compact and ends with a newline.

mod docs;
mod error;

use std::collections::HashMap;
use std::convert::Infallible;
use std::future::Future;
use std::path::{Component, Path as FsPath, PathBuf};
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, Method, StatusCode, Uri};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::archive::{ArchiveStore, Trigger};
use crate::channel_db::{ChannelDb, ChannelDbError, Role, Value, ValueTag};
use crate::query::{self, QuerySpec};
use crate::scanner::Scanner;
use crate::sim::{self, Catalog};
use crate::system::System;
use crate::tune::{BeamParameters, RestoreMode, TuneEngine};

pub use docs::{DocEntry, DocPage};
pub use error::{ApiError, ErrorCode};

/// Every (method, path) the server routes.
pub const ROUTES: &[(&str, &str)] = &[
    ("GET", "/api/tables"),
    ("GET", "/api/tables/{name}"),
    ("POST", "/api/query"),
    ("GET", "/api/channels"),
    ("GET", "/api/channels/stream"),
    ("PUT", "/api/channels/{name}"),
    ("GET", "/api/tunes"),
    ("POST", "/api/tunes"),
    ("GET", "/api/tunes/{id}"),
    ("POST", "/api/tunes/{id}/restore"),
    ("GET", "/api/snapshots"),
    ("POST", "/api/snapshots"),
    ("GET", "/api/snapshots/{id}"),
    ("GET", "/api/devices/{id}/presets"),
    ("GET", "/api/devices/{id}/presets/{preset}"),
    ("GET", "/api/docs"),
    ("GET", "/api/docs/{page}"),
    ("GET", "/api/health"),
    ("GET", "/"),
];

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    db: Arc<ChannelDb>,
    store: Arc<ArchiveStore>,
    catalog: Arc<Catalog>,
    tunes: Arc<TuneEngine>,
    scanner: Arc<Scanner>,
    ui_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(
        db: Arc<ChannelDb>,
        store: Arc<ArchiveStore>,
        catalog: Arc<Catalog>,
        tunes: Arc<TuneEngine>,
        scanner: Arc<Scanner>,
        ui_dir: Option<PathBuf>,
    ) -> Self {
        AppState {
            inner: Arc::new(Inner {
                db,
                store,
                catalog,
                tunes,
                scanner,
                ui_dir,
            }),
        }
    }

    pub fn from_system(sys: &System) -> Self {
        AppState::new(
            sys.db.clone(),
            sys.store.clone(),
            sys.catalog.clone(),
            sys.tunes.clone(),
            sys.scanner.clone(),
            sys.config.ui_dir.clone(),
        )
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/api/tables", get(list_tables))
        .route("/api/tables/{name}", get(describe_table))
        .route("/api/query", axum::routing::post(run_query))
        .route("/api/channels", get(list_channels))
        .route("/api/channels/stream", get(stream_channels))
        .route("/api/channels/{name}", axum::routing::put(write_channel))
        .route("/api/tunes", get(list_tunes).post(archive_tune))
        .route("/api/tunes/{id}", get(get_tune))
        .route("/api/tunes/{id}/restore", axum::routing::post(restore_tune))
        .route("/api/snapshots", get(list_snapshots).post(take_snapshot))
        .route("/api/snapshots/{id}", get(get_snapshot))
        .route("/api/devices/{id}/presets", get(list_presets))
        .route("/api/devices/{id}/presets/{preset}", get(get_preset))
        .route("/api/docs", get(docs_index))
        .route("/api/docs/{page}", get(docs_page))
        .route("/api/health", get(health))
        .fallback(fallback)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

pub(crate) fn json_response<T: Serialize + ?Sized>(status: StatusCode, body: &T) -> Response {
    match serde_json::to_vec(body) {
        Ok(mut bytes) => {
            bytes.push(b'\n');
            (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response()
        }
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, format!("serialization failed: {e}")).into_response(),
    }
}

fn ok<T: Serialize>(body: &T) -> Response {
    json_response(StatusCode::OK, body)
}

type ApiResult = Result<Response, ApiError>;

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let body = if body.iter().all(u8::is_ascii_whitespace) { b"{}".as_slice() } else { body };
    serde_json::from_slice(body).map_err(|e| ApiError::new(ErrorCode::MalformedBody, e.to_string()))
}

fn parse_id(raw: &str) -> Result<i64, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::new(ErrorCode::InvalidId, format!("'{raw}' is not an integer id")))
}

async fn list_tables() -> Response {
    ok(&query::tables())
}

async fn describe_table(Path(name): Path<String>) -> ApiResult {
    let schema = query::describe(&name).map_err(|e| ApiError::from(e).with_status(StatusCode::NOT_FOUND))?;
    Ok(ok(schema))
}

async fn run_query(State(st): State<AppState>, body: Bytes) -> ApiResult {
    let spec: QuerySpec = parse_body(&body)?;
    query::validate(&spec)?;
    let store = st.inner.store.clone();
    let result = blocking(move || Ok(query::execute(&store, &spec)?)).await?;
    Ok(ok(&result))
}

fn pattern_of(params: &HashMap<String, String>) -> &str {
    params.get("pattern").map_or("**", String::as_str)
}

async fn list_channels(State(st): State<AppState>, Query(params): Query<HashMap<String, String>>) -> ApiResult {
    let records = st.inner.db.read_pattern(pattern_of(&params))?;
    Ok(ok(&records))
}

async fn stream_channels(State(st): State<AppState>, Query(params): Query<HashMap<String, String>>) -> ApiResult {
    let sub = st.inner.db.subscribe(pattern_of(&params))?;
    let stream = futures::stream::unfold(Some(sub), |sub| async move {
        let mut sub = sub?;
        match sub.recv().await {
            Ok(Some(rec)) => {
                let data = serde_json::to_string(&rec).unwrap_or_default();
                Some((Ok::<_, Infallible>(Event::default().event("delta").data(data)), Some(sub)))
            }
            Ok(None) => None,
            Err(e) => {
                let code = ApiError::from(e);
                let data = json!({"code": code.code.as_str(), "message": code.message}).to_string();
                Some((Ok(Event::default().event("error").data(data)), None))
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WriteBody {
    value: Json,
}

#[derive(Serialize)]
struct WriteReply<'a> {
    channel: &'a str,
    seq: u64,
    global_version: u64,
}

/// Maps a JSON literal onto the channel's declared type; no coercion other
/// than accepting any number for a float channel.
pub fn value_for_tag(tag: &ValueTag, raw: &Json) -> Option<Value> {
    match tag {
        ValueTag::Float => raw.as_f64().map(Value::Float),
        ValueTag::Int => raw.as_i64().map(Value::Int),
        ValueTag::Enum(_) => raw.as_str().map(|s| Value::Enum(s.to_string())),
    }
}

async fn write_channel(State(st): State<AppState>, Path(name): Path<String>, body: Bytes) -> ApiResult {
    let db = &st.inner.db;
    let current = db.read(&name)?;
    if current.role == Role::Readback {
        return Err(ApiError::new(
            ErrorCode::ReadOnlyChannel,
            format!("{name} is a readback channel"),
        ));
    }
    let WriteBody { value } = parse_body(&body)?;
    let tag = db.tag(&name)?;
    let value = value_for_tag(&tag, &value).ok_or_else(|| {
        ApiError::from(ChannelDbError::TypeMismatch {
            channel: name.clone(),
            expected: tag.name(),
            got: json_kind(&value),
        })
    })?;
    if let (Some(info), Some(v)) = (st.inner.catalog.setpoint(&name), value.as_f64()) {
        if !info.limits.contains(v) {
            return Err(ApiError::new(
                ErrorCode::ValueOutOfLimits,
                format!("{v} is outside [{}, {}] for {name}", info.limits.min, info.limits.max),
            ));
        }
    }
    let ack = db.write(&name, value)?;
    Ok(ok(&WriteReply {
        channel: &name,
        seq: ack.seq,
        global_version: ack.global_version,
    }))
}

fn json_kind(v: &Json) -> &'static str {
    match v {
        Json::Null => "null",
        Json::Bool(_) => "bool",
        Json::Number(n) if n.is_i64() || n.is_u64() => "int",
        Json::Number(_) => "float",
        Json::String(_) => "text",
        Json::Array(_) => "array",
        Json::Object(_) => "object",
    }
}

async fn list_tunes(State(st): State<AppState>) -> ApiResult {
    let store = st.inner.store.clone();
    let tunes = blocking(move || Ok(store.list_tunes()?)).await?;
    Ok(ok(&tunes))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchiveBody {
    #[serde(default)]
    label: Option<String>,
}

async fn archive_tune(State(st): State<AppState>, body: Bytes) -> ApiResult {
    let ArchiveBody { label } = parse_body(&body)?;
    let scanner = st.inner.scanner.clone();
    let id = blocking(move || Ok(scanner.capture_tune(label.as_deref().unwrap_or("manual"), Trigger::Manual)?)).await?;
    Ok(json_response(StatusCode::CREATED, &json!({ "id": id })))
}

async fn get_tune(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let id = parse_id(&id)?;
    let tunes = st.inner.tunes.clone();
    let (tune, values) = blocking(move || Ok(tunes.load_tune(id)?)).await?;
    Ok(ok(&json!({ "tune": tune, "values": values })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RestoreBody {
    beam: BeamParameters,
    #[serde(default = "default_mode")]
    mode: RestoreMode,
}

fn default_mode() -> RestoreMode {
    RestoreMode::DryRun
}

async fn restore_tune(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let id = parse_id(&id)?;
    let RestoreBody { beam, mode } = parse_body(&body)?;
    let tunes = st.inner.tunes.clone();
    let report = blocking(move || Ok(tunes.restore_tune(id, beam, mode)?)).await?;
    Ok(ok(&report))
}

async fn list_snapshots(State(st): State<AppState>) -> ApiResult {
    let store = st.inner.store.clone();
    let snaps = blocking(move || Ok(store.list_snapshots()?)).await?;
    Ok(ok(&snaps))
}

async fn take_snapshot(State(st): State<AppState>) -> ApiResult {
    let scanner = st.inner.scanner.clone();
    let id = blocking(move || Ok(scanner.snapshot(Trigger::Manual)?)).await?;
    Ok(json_response(StatusCode::CREATED, &json!({ "id": id })))
}

async fn get_snapshot(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let id = parse_id(&id)?;
    let store = st.inner.store.clone();
    let (snapshot, values) = blocking(move || Ok(store.load_snapshot(id)?)).await?;
    Ok(ok(&json!({ "snapshot": snapshot, "values": values })))
}

async fn list_presets(State(st): State<AppState>, Path(device): Path<String>) -> ApiResult {
    let catalog = &st.inner.catalog;
    if catalog.device(&device).is_none() {
        return Err(ApiError::from(sim::SimError::UnknownDevice(device)));
    }
    let presets = catalog.presets_for(&device);
    Ok(ok(&json!({ "device_id": device, "presets": presets })))
}

async fn get_preset(State(st): State<AppState>, Path((device, preset)): Path<(String, String)>) -> ApiResult {
    let steps = sim::lookup_preset(&st.inner.catalog, &device, &preset)?;
    Ok(ok(&json!({ "device_id": device, "preset_name": preset, "position_steps": steps })))
}

async fn docs_index() -> Response {
    ok(&docs::index())
}

async fn docs_page(Path(page): Path<String>) -> ApiResult {
    docs::page(&page)
        .map(|p| ok(&p))
        .ok_or_else(|| ApiError::new(ErrorCode::UnknownPage, format!("no page '{page}'")))
}

async fn health(State(st): State<AppState>) -> ApiResult {
    let store = st.inner.store.clone();
    let snapshot_count = blocking(move || Ok(store.count("snapshots")?)).await?;
    Ok(ok(&json!({
        "status": "ok",
        "store_version": st.inner.db.version(),
        "snapshot_count": snapshot_count,
        "skipped_ticks": st.inner.scanner.skipped_ticks(),
    })))
}

const UI_STUB: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>tunevault</title></head>\n\
<body><h1>tunevault</h1><p>The operator UI is not installed. The JSON API is under <code>/api</code>; \
see <a href=\"/api/docs\">/api/docs</a>.</p></body></html>\n";

async fn index(State(st): State<AppState>) -> Response {
    if let Some(resp) = static_file(&st, "index.html").await {
        return resp;
    }
    ([(header::CONTENT_TYPE, "text/html; charset=utf-8")], UI_STUB).into_response()
}

async fn fallback(State(st): State<AppState>, method: Method, uri: Uri) -> Response {
    let path = uri.path();
    if method == Method::GET && !path.starts_with("/api/") {
        if let Some(resp) = static_file(&st, path.trim_start_matches('/')).await {
            return resp;
        }
    }
    ApiError::new(ErrorCode::NotFound, format!("no route for {method} {path}")).into_response()
}

async fn method_not_allowed(method: Method, uri: Uri) -> Response {
    ApiError::new(ErrorCode::MethodNotAllowed, format!("{method} is not supported on {}", uri.path())).into_response()
}

async fn static_file(st: &AppState, rel: &str) -> Option<Response> {
    let root = st.inner.ui_dir.as_ref()?;
    let rel = FsPath::new(rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return None;
    }
    let bytes = tokio::fs::read(root.join(rel)).await.ok()?;
    let mime = match rel.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("ico") => "image/x-icon",
        _ => "application/octet-stream",
    };
    Some(([(header::CONTENT_TYPE, mime)], Body::from(bytes)).into_response())
}
