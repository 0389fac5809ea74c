//! HTTP JSON API hosting CL_u sessions.
//!
//! Endpoints:
//!
//! - `POST   /api/v1/sessions` creates a session from a JSON or CSV matrix
//! - `GET    /api/v1/sessions` lists session summaries
//! - `GET    /api/v1/sessions/{id}` returns one session
//! - `POST   /api/v1/sessions/{id}/verdicts` records a verdict
//! - `DELETE /api/v1/sessions/{id}` removes a session
//! - `GET    /healthz` answers `ok`

pub mod error;
pub mod store;
pub mod wire;

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use doric_core::engine::{EngineError, Session, SessionStatus};
use doric_core::matrix::CoverageMatrix;
use serde::Deserialize;
use tower_http::cors::{AllowOrigin, CorsLayer};

use error::ApiError;
use store::{Handle, Store};
use wire::{CreateRequest, Record, SessionResource, SessionSummary, UnitSpec, VerdictRequest};

pub use store::{StoreError, SESSION_SCHEMA};

pub const DEFAULT_MAX_BODY: usize = 8 << 20;
pub const DEFAULT_MAX_CELLS: usize = 4_000_000;

#[derive(Debug, Clone)]
pub struct Limits {
    /// Largest accepted request body in bytes.
    pub max_body: usize,
    /// Largest accepted matrix, as units times tests.
    pub max_cells: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_body: DEFAULT_MAX_BODY,
            max_cells: DEFAULT_MAX_CELLS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AppState {
    store: Arc<Store>,
    limits: Limits,
}

impl AppState {
    pub fn new(store: Store, limits: Limits) -> Self {
        AppState {
            store: Arc::new(store),
            limits,
        }
    }

    pub fn in_memory() -> Self {
        AppState::new(Store::in_memory(), Limits::default())
    }
}

/// Builds the router. `cors` is an allowed origin, or `*` for any.
pub fn router(state: AppState, cors: Option<&str>) -> Result<Router, String> {
    let max_body = state.limits.max_body;
    let mut app = Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/api/v1/sessions", post(create_session).get(list_sessions))
        .route(
            "/api/v1/sessions/{id}",
            get(get_session).delete(delete_session),
        )
        .route("/api/v1/sessions/{id}/verdicts", post(post_verdict))
        .layer(DefaultBodyLimit::max(max_body))
        .with_state(state);
    if let Some(origin) = cors {
        let allow = if origin == "*" {
            AllowOrigin::any()
        } else {
            let value =
                HeaderValue::from_str(origin).map_err(|_| format!("invalid origin {origin:?}"))?;
            AllowOrigin::exact(value)
        };
        app = app.layer(
            CorsLayer::new()
                .allow_origin(allow)
                .allow_methods([Method::GET, Method::POST, Method::DELETE])
                .allow_headers([header::CONTENT_TYPE]),
        );
    }
    Ok(app)
}

/// Serves the API until the listener fails.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    cors: Option<&str>,
) -> std::io::Result<()> {
    let app = router(state, cors).map_err(std::io::Error::other)?;
    serve_app(listener, app).await
}

/// Serves an already built router.
pub async fn serve_app(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}

fn body_bytes(body: Result<Bytes, BytesRejection>) -> Result<Bytes, ApiError> {
    body.map_err(|r| {
        let code = if r.status() == StatusCode::PAYLOAD_TOO_LARGE {
            "too-large"
        } else {
            "bad-request"
        };
        ApiError::new(r.status(), code, r.body_text())
    })
}

fn parse_json<'a, T: Deserialize<'a>>(bytes: &'a [u8]) -> Result<T, ApiError> {
    serde_json::from_slice(bytes)
        .map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

#[derive(Debug, Deserialize)]
struct CreateQuery {
    update_bound: Option<usize>,
}

fn is_csv(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("text/csv") || v.starts_with("text/plain"))
}

async fn create_session(
    State(state): State<AppState>,
    Query(query): Query<CreateQuery>,
    headers: HeaderMap,
    body: Result<Bytes, BytesRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let bytes = body_bytes(body)?;
    let (matrix, bound) = if is_csv(&headers) {
        let text =
            std::str::from_utf8(&bytes).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
        let bound = query
            .update_bound
            .or(Some(doric_core::eval::DEFAULT_UPDATE_BOUND));
        (CoverageMatrix::from_csv(text)?, bound)
    } else {
        let req: CreateRequest = parse_json(&bytes)?;
        let matrix = match (req.matrix, req.csv) {
            (Some(doc), None) => CoverageMatrix::try_from(doc)?,
            (None, Some(csv)) => CoverageMatrix::from_csv(&csv)?,
            _ => {
                return Err(ApiError::bad_request(
                    "give exactly one of `matrix` and `csv`",
                ))
            }
        };
        (matrix, req.update_bound)
    };
    let cells = matrix.num_units() * matrix.num_tests();
    if cells > state.limits.max_cells {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "too-large",
            format!(
                "matrix has {cells} cells, limit is {}",
                state.limits.max_cells
            ),
        ));
    }
    let now = Utc::now();
    let record = Record {
        id: uuid::Uuid::new_v4().simple().to_string(),
        revision: 0,
        created: now,
        updated: now,
        session: Session::new(matrix, bound),
    };
    let store = state.store.clone();
    let resource = blocking(move || {
        let resource = record.resource();
        store
            .insert(record)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(resource)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(resource)))
}

/// Runs likelihood computation and file writes off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

fn lookup(state: &AppState, id: &str) -> Result<Handle, ApiError> {
    state.store.get(id).ok_or_else(|| ApiError::not_found(id))
}

async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionResource>, ApiError> {
    let handle = lookup(&state, &id)?;
    blocking(move || {
        let slot = handle.lock().unwrap();
        if slot.deleted {
            return Err(ApiError::not_found(&id));
        }
        Ok(Json(slot.record.resource()))
    })
    .await
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<SessionSummary>> {
    let mut all: Vec<SessionSummary> = state
        .store
        .all()
        .iter()
        .filter_map(|h| {
            let slot = h.lock().unwrap();
            (!slot.deleted).then(|| slot.record.summary())
        })
        .collect();
    all.sort_by(|a, b| (a.created, &a.id).cmp(&(b.created, &b.id)));
    Json(all)
}

async fn delete_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<StatusCode, ApiError> {
    let store = state.store.clone();
    blocking(move || {
        store
            .remove(&id)
            .map_err(|e| ApiError::internal(e.to_string()))
    })
    .await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn post_verdict(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Json<SessionResource>, ApiError> {
    let req: VerdictRequest = parse_json(&body_bytes(body)?)?;
    let handle = lookup(&state, &id)?;
    let store = state.store.clone();
    blocking(move || {
        let mut slot = handle.lock().unwrap();
        if slot.deleted {
            return Err(ApiError::not_found(&id));
        }
        let record = &mut slot.record;
        if let Some(rev) = req.revision {
            if rev != record.revision {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "revision-mismatch",
                    format!(
                        "session is at revision {}, request was for {rev}",
                        record.revision
                    ),
                )
                .with_session(record.resource()));
            }
        }
        let m = record.session.matrix();
        let unit = match &req.unit {
            UnitSpec::Index(i) => m.check_unit(*i).map(|_| *i).ok(),
            UnitSpec::Name(name) => m.resolve_unit(name),
        }
        .ok_or_else(|| ApiError::bad_request(format!("unknown unit {:?}", req.unit)))?;

        let status = match record.session.apply_verdict(unit, req.verdict) {
            Ok(status) => status,
            Err(e @ (EngineError::Closed(_) | EngineError::DuplicateVerdict(_))) => {
                let code = match e {
                    EngineError::Closed(_) => "session-closed",
                    _ => "duplicate-verdict",
                };
                return Err(ApiError::new(StatusCode::CONFLICT, code, e.to_string())
                    .with_session(record.resource()));
            }
            Err(e) => return Err(ApiError::bad_request(e.to_string())),
        };
        record.revision += 1;
        record.updated = Utc::now();
        store
            .save(record)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        let resource = record.resource();
        if status == SessionStatus::ClosedInconsistent {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "inconsistent-knowledge",
                "a failing test has no remaining candidate cause; the session is closed",
            )
            .with_session(resource));
        }
        Ok(Json(resource))
    })
    .await
}
