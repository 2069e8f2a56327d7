//! HTTP front end. Sessions are created from a JSON config, fed
//! line-delimited JSON records, reported on and checkpointed.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | `POST` | `/sessions` | session config | `{id, status}` |
//! | `GET` | `/sessions` | | session list |
//! | `GET` | `/sessions/{id}` | | session status |
//! | `DELETE` | `/sessions/{id}` | | closes the session |
//! | `POST` | `/sessions/{id}/records` | records, one JSON object per line | update summaries |
//! | `GET` | `/sessions/{id}/report` | | latest report |
//! | `POST` | `/sessions/{id}/checkpoint` | | `{path}` |
//! | `POST` | `/sessions/restore` | `{"checkpoint": name}` | `{id, status}` |
//!
//! A record line looks like
//! `{"sequence": ["x1", "cz"], "freq": 0.42, "shots": 100, "t": 12.5, "batch": 3}`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fbt_core::parse_json;
use fbt_core::records::read_records;
use fbt_core::session::{Session, SessionConfig, SessionReport, SessionStatus};
use fbt_core::FbtError;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Mutex;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    path: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            path: None,
        }
    }

    fn not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, format!("unknown session `{id}`"))
    }

    fn conflict(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::CONFLICT, message)
    }
}

impl From<FbtError> for ApiError {
    fn from(e: FbtError) -> Self {
        let status = match &e {
            FbtError::Field { .. }
            | FbtError::InvalidConfig(_)
            | FbtError::Format(_)
            | FbtError::Json(_)
            | FbtError::RegistryMismatch(_)
            | FbtError::UnknownGate(_)
            | FbtError::UnknownEffect(_)
            | FbtError::OutOfOrder(_) => StatusCode::BAD_REQUEST,
            FbtError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let path = match &e {
            FbtError::Field { path, .. } => Some(path.clone()),
            _ => None,
        };
        ApiError {
            status,
            message: e.to_string(),
            path,
        }
    }
}

impl From<tokio::task::JoinError> for ApiError {
    fn from(e: tokio::task::JoinError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(p) = self.path {
            body["path"] = p.into();
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct SessionHandle {
    /// One writer at a time; waiting writers are served in arrival order.
    session: Arc<Mutex<Session>>,
    /// Latest completed report; readers never wait on writers.
    report: RwLock<Arc<SessionReport>>,
    boot_error: RwLock<Option<String>>,
}

impl SessionHandle {
    fn new(session: Session) -> Arc<Self> {
        let report = Arc::new(session.report());
        Arc::new(SessionHandle {
            session: Arc::new(Mutex::new(session)),
            report: RwLock::new(report),
            boot_error: RwLock::new(None),
        })
    }

    fn report(&self) -> Arc<SessionReport> {
        self.report.read().expect("report lock").clone()
    }

    fn publish(&self, report: SessionReport) {
        *self.report.write().expect("report lock") = Arc::new(report);
    }
}

pub struct AppState {
    sessions: RwLock<BTreeMap<String, Arc<SessionHandle>>>,
    checkpoint_dir: PathBuf,
    counter: AtomicU64,
}

impl AppState {
    pub fn new(checkpoint_dir: PathBuf) -> Arc<Self> {
        Arc::new(AppState {
            sessions: RwLock::new(BTreeMap::new()),
            checkpoint_dir,
            counter: AtomicU64::new(0),
        })
    }

    fn new_id(&self) -> String {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.subsec_nanos())
            .unwrap_or(0);
        format!("s{n:04}-{nanos:08x}")
    }

    fn handle(&self, id: &str) -> ApiResult<Arc<SessionHandle>> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    fn insert(&self, id: String, handle: Arc<SessionHandle>) {
        self.sessions.write().expect("session table lock").insert(id, handle);
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/restore", post(restore_session))
        .route("/sessions/{id}", get(session_status).delete(close_session))
        .route("/sessions/{id}/records", post(submit_records))
        .route("/sessions/{id}/report", get(get_report))
        .route("/sessions/{id}/checkpoint", post(checkpoint_session))
        .with_state(state)
}

#[derive(Serialize)]
struct SessionInfo {
    id: String,
    status: SessionStatus,
    update_count: u64,
    snapshot_count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    boot_error: Option<String>,
}

fn info(handle: &SessionHandle) -> SessionInfo {
    let r = handle.report();
    SessionInfo {
        id: r.id.clone(),
        status: r.status,
        update_count: r.update_count,
        snapshot_count: r.snapshot_count,
        boot_error: handle.boot_error.read().expect("boot error lock").clone(),
    }
}

async fn create_session(State(app): State<Arc<AppState>>, body: String) -> ApiResult<(StatusCode, Json<SessionInfo>)> {
    let config: SessionConfig = if body.trim().is_empty() {
        SessionConfig::default()
    } else {
        parse_json(&body)?
    };
    let sampling = config.bootstrap.is_sampling();
    let id = app.new_id();
    let handle = SessionHandle::new(Session::new(id.clone(), config)?);
    let mut guard = handle.session.clone().lock_owned().await;
    let boot = {
        let handle = handle.clone();
        tokio::task::spawn_blocking(move || {
            let result = guard
                .config()
                .boot_state(guard.base())
                .and_then(|state| guard.start(state));
            if let Err(e) = &result {
                tracing::warn!(session = %guard.id(), error = %e, "bootstrap failed");
                *handle.boot_error.write().expect("boot error lock") = Some(e.to_string());
                guard.close();
            }
            handle.publish(guard.report());
            result
        })
    };
    if sampling {
        app.insert(id.clone(), handle.clone());
        tracing::info!(session = %id, "booting in the background");
        return Ok((StatusCode::ACCEPTED, Json(info(&handle))));
    }
    boot.await??;
    app.insert(id.clone(), handle.clone());
    tracing::info!(session = %id, "session live");
    Ok((StatusCode::CREATED, Json(info(&handle))))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RestoreRequest {
    /// File name inside the checkpoint directory.
    checkpoint: String,
}

async fn restore_session(State(app): State<Arc<AppState>>, body: String) -> ApiResult<(StatusCode, Json<SessionInfo>)> {
    let req: RestoreRequest = parse_json(&body)?;
    if req.checkpoint.contains(['/', '\\']) || req.checkpoint.starts_with('.') {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "checkpoint must be a file name inside the checkpoint directory",
        ));
    }
    let path = app.checkpoint_dir.join(&req.checkpoint);
    let session = tokio::task::spawn_blocking(move || Session::restore(&path)).await??;
    let id = session.id().to_string();
    if app.handle(&id).is_ok() {
        return Err(ApiError::conflict(format!("session `{id}` is already open")));
    }
    let handle = SessionHandle::new(session);
    app.insert(id, handle.clone());
    Ok((StatusCode::CREATED, Json(info(&handle))))
}

async fn list_sessions(State(app): State<Arc<AppState>>) -> Json<Vec<SessionInfo>> {
    let handles: Vec<_> = app.sessions.read().expect("session table lock").values().cloned().collect();
    Json(handles.iter().map(|h| info(h)).collect())
}

async fn session_status(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionInfo>> {
    let handle = app.handle(&id)?;
    Ok(Json(info(&handle)))
}

async fn close_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionInfo>> {
    let handle = app.handle(&id)?;
    let mut session = handle.session.lock().await;
    session.close();
    handle.publish(session.report());
    drop(session);
    Ok(Json(info(&handle)))
}

async fn submit_records(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: String,
) -> ApiResult<Json<serde_json::Value>> {
    let handle = app.handle(&id)?;
    match handle.report().status {
        SessionStatus::Live => {}
        SessionStatus::Booting => return Err(ApiError::conflict(format!("session `{id}` is still booting"))),
        SessionStatus::Closed => return Err(ApiError::conflict(format!("session `{id}` is closed"))),
    }
    let records = read_records(body.as_bytes())?;
    let mut guard = handle.session.clone().lock_owned().await;
    if guard.status() != SessionStatus::Live {
        return Err(ApiError::conflict(format!("session `{id}` is not live")));
    }
    let worker = handle.clone();
    let summaries = tokio::task::spawn_blocking(move || {
        let result = guard.submit(&records);
        worker.publish(guard.report());
        result
    })
    .await??;
    Ok(Json(serde_json::to_value(summaries).map_err(FbtError::from)?))
}

async fn get_report(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionReport>> {
    let report = app.handle(&id)?.report();
    Ok(Json((*report).clone()))
}

async fn checkpoint_session(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<serde_json::Value>> {
    let handle = app.handle(&id)?;
    let dir = app.checkpoint_dir.clone();
    let path = dir.join(format!("{id}.ckpt"));
    let guard = handle.session.clone().lock_owned().await;
    let written = path.clone();
    tokio::task::spawn_blocking(move || -> fbt_core::Result<()> {
        std::fs::create_dir_all(&dir)?;
        guard.checkpoint(&written)
    })
    .await??;
    Ok(Json(json!({ "path": path.display().to_string() })))
}

/// Serves until the process is stopped.
pub async fn serve(addr: &str, checkpoint_dir: PathBuf) -> anyhow::Result<()> {
    std::fs::create_dir_all(&checkpoint_dir)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, dir = %checkpoint_dir.display(), "listening");
    axum::serve(listener, router(AppState::new(checkpoint_dir))).await?;
    Ok(())
}
