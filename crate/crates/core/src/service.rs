//! HTTP JSON API over an immutable [`Engine`] snapshot.
//!
//! | method | path                  | body / params                         |
//! |--------|-----------------------|---------------------------------------|
//! | POST   | `/query`              | [`QueryRequest`] -> [`QueryResponse`]   |
//! | GET    | `/pois?q=..&k=..`     | BM25 POI search                       |
//! | GET    | `/regions/{id}`       | topics, POI count, polygon            |
//! | GET    | `/trajectories/{id}`  | points, topic vectors, stopovers      |
//! | POST   | `/similar`            | [`SimilarRequest`] -> `MatchResult`     |
//! | GET    | `/topics`             | labels and top words                  |
//! | GET    | `/health`             | status and partition count            |
//!
//! Malformed JSON gets 400; query errors get 422 with `{"error": <name>}`.

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};

use crate::pipeline::{Engine, EngineError, ErrorClass, QueryRequest};
use crate::trajops::MatchWeights;

/// Shared, swappable engine snapshot. Requests clone the inner `Arc`, so a
/// swap never disturbs a query already running.
#[derive(Clone)]
pub struct AppState {
    snapshot: Arc<RwLock<Arc<Engine>>>,
}

impl AppState {
    pub fn new(engine: Engine) -> Self {
        AppState {
            snapshot: Arc::new(RwLock::new(Arc::new(engine))),
        }
    }

    pub fn engine(&self) -> Arc<Engine> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn replace(&self, engine: Engine) {
        *self.snapshot.write().expect("snapshot lock") = Arc::new(engine);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarRequest {
    pub id_a: String,
    pub id_b: String,
    #[serde(default = "one")]
    pub w1: f64,
    #[serde(default = "one")]
    pub w2: f64,
    #[serde(default = "yes")]
    pub ordered: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
struct PoiParams {
    #[serde(default)]
    q: String,
    k: Option<usize>,
}

#[derive(Debug, Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: String,
}

fn json<T: Serialize>(status: StatusCode, value: &T) -> Response {
    match serde_json::to_vec(value) {
        Ok(body) => (status, [(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "Serialize", e.to_string()),
    }
}

fn error(status: StatusCode, name: &str, message: String) -> Response {
    let body = serde_json::to_vec(&ErrorBody { error: name, message }).unwrap_or_default();
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn engine_error(e: EngineError) -> Response {
    let status = match e.class() {
        ErrorClass::Request => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorClass::NotFound => StatusCode::NOT_FOUND,
        ErrorClass::Data => StatusCode::INTERNAL_SERVER_ERROR,
    };
    error(status, e.name(), e.to_string())
}

fn parse<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| error(StatusCode::BAD_REQUEST, "MalformedJson", e.to_string()))
}

fn respond<T: Serialize>(result: Result<T, EngineError>) -> Response {
    match result {
        Ok(v) => json(StatusCode::OK, &v),
        Err(e) => engine_error(e),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, Response> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, "Panic", e.to_string()))
}

async fn query(State(state): State<AppState>, body: Bytes) -> Response {
    let request: QueryRequest = match parse(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let engine = state.engine();
    match blocking(move || engine.query(&request)).await {
        Ok(result) => respond(result),
        Err(resp) => resp,
    }
}

async fn pois(State(state): State<AppState>, Query(params): Query<PoiParams>) -> Response {
    let hits = state.engine().search_pois(&params.q, params.k.unwrap_or(10));
    json(StatusCode::OK, &hits)
}

async fn region(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    respond(state.engine().region(&id))
}

async fn trajectory(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    respond(state.engine().trajectory(&id))
}

async fn similar(State(state): State<AppState>, body: Bytes) -> Response {
    let req: SimilarRequest = match parse(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let weights = MatchWeights { w1: req.w1, w2: req.w2 };
    let engine = state.engine();
    match blocking(move || engine.similar(&req.id_a, &req.id_b, weights, req.ordered)).await {
        Ok(result) => respond(result),
        Err(resp) => resp,
    }
}

async fn topics(State(state): State<AppState>) -> Response {
    let engine = state.engine();
    json(
        StatusCode::OK,
        &serde_json::json!({
            "labels": engine.topics().topic_labels,
            "topics": engine.topic_views(10),
        }),
    )
}

async fn health(State(state): State<AppState>) -> Response {
    let engine = state.engine();
    json(
        StatusCode::OK,
        &serde_json::json!({
            "status": "ok",
            "partitions": engine.index().partition_count(),
            "trajectories": engine.index().trajectory_ids().len(),
        }),
    )
}

pub fn router(state: AppState) -> Router {
    let cors = CorsLayer::new().allow_origin(Any).allow_methods(Any).allow_headers(Any);
    Router::new()
        .route("/query", post(query))
        .route("/pois", get(pois))
        .route("/regions/{id}", get(region))
        .route("/trajectories/{id}", get(trajectory))
        .route("/similar", post(similar))
        .route("/topics", get(topics))
        .route("/health", get(health))
        .layer(cors)
        .with_state(state)
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
