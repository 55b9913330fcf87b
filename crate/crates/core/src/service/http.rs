use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;

use super::geocode::{GeocodeInput, LocationNotFound};
use super::handler::{QueryErrorKind, QueryRequest, QueryService};
use crate::store::GeoPoint;

#[derive(Clone)]
struct AppState {
    service: Arc<QueryService>,
    pool: Arc<Semaphore>,
}

/// Body of `POST /geocode`: a place name or a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeocodeRequest {
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub lat: Option<f64>,
    #[serde(default)]
    pub lon: Option<f64>,
}

/// Routes: `POST /query`, `POST /geocode`, `GET /health`, `GET /stats`,
/// `GET /templates`. At most `pool_size` tool loops run at once.
pub fn router(service: Arc<QueryService>, pool_size: usize) -> Router {
    let state = AppState { service, pool: Arc::new(Semaphore::new(pool_size.max(1))) };
    Router::new()
        .route("/query", post(query))
        .route("/geocode", post(geocode))
        .route("/health", get(health))
        .route("/stats", get(stats))
        .route("/templates", get(templates))
        .with_state(state)
}

fn bad_request(message: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({"error": "invalid_request", "message": message}))).into_response()
}

fn internal(message: String) -> Response {
    (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": "internal", "message": message}))).into_response()
}

async fn query(State(state): State<AppState>, body: Result<Json<QueryRequest>, JsonRejection>) -> Response {
    let Json(request) = match body {
        Ok(b) => b,
        Err(e) => return bad_request(e.body_text()),
    };
    let Ok(_permit) = state.pool.clone().acquire_owned().await else {
        return internal("worker pool closed".into());
    };
    let service = state.service.clone();
    let result = match tokio::task::spawn_blocking(move || service.handle_query(&request)).await {
        Ok(r) => r,
        Err(e) => return internal(e.to_string()),
    };
    match result {
        Ok(resp) => (StatusCode::OK, Json(resp)).into_response(),
        Err(err) => {
            let status = match err.error {
                QueryErrorKind::Rejected => StatusCode::UNPROCESSABLE_ENTITY,
                QueryErrorKind::LocationNotFound => StatusCode::NOT_FOUND,
                QueryErrorKind::BackendUnavailable => StatusCode::SERVICE_UNAVAILABLE,
                QueryErrorKind::GenerationFailed => StatusCode::BAD_GATEWAY,
            };
            (status, Json(err)).into_response()
        }
    }
}

async fn geocode(State(state): State<AppState>, body: Result<Json<GeocodeRequest>, JsonRejection>) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return bad_request(e.body_text()),
    };
    let service = state.service.clone();
    let result = tokio::task::spawn_blocking(move || match (&req.text, req.lat, req.lon) {
        (Some(t), None, None) => Ok(service.geocode(GeocodeInput::Text(t))),
        (None, Some(lat), Some(lon)) => match GeoPoint::new(lat, lon) {
            Ok(p) => Ok(service.geocode(GeocodeInput::Point(p))),
            Err(e) => Err(e.to_string()),
        },
        _ => Err("give either text or both lat and lon".to_string()),
    })
    .await;
    match result {
        Ok(Ok(Ok(g))) => (StatusCode::OK, Json(g)).into_response(),
        Ok(Ok(Err(LocationNotFound(message)))) => {
            (StatusCode::NOT_FOUND, Json(json!({"error": "location_not_found", "message": message}))).into_response()
        }
        Ok(Err(message)) => bad_request(message),
        Err(e) => internal(e.to_string()),
    }
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    let store = state.service.store();
    Json(json!({
        "status": "ok",
        "records": store.record_count(),
        "locations": store.gazetteer().len(),
    }))
}

async fn stats(State(state): State<AppState>) -> Response {
    Json(state.service.stats()).into_response()
}

async fn templates(State(state): State<AppState>) -> Response {
    Json(json!({ "questions": state.service.ui_questions() })).into_response()
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}
