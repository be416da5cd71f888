//! `/v1` HTTP routes over an [`Engine`].

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, Method};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::engine::{Engine, Health};
use crate::error::{ApiError, ServiceError};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub question_id: usize,
    pub raw_index: usize,
    /// Ends the session after this answer even if fewer than K questions were asked.
    #[serde(default)]
    pub finish: bool,
}

#[derive(Debug, Clone, Serialize)]
struct HealthBody {
    status: Health,
    version: &'static str,
}

type AppState = State<Arc<Engine>>;

pub fn router(engine: Arc<Engine>) -> Router {
    let cors = match &engine.config().cors_origin {
        Some(origin) => match HeaderValue::from_str(origin) {
            Ok(v) => AllowOrigin::exact(v),
            Err(_) => {
                log::warn!("ignoring malformed cors_origin {origin:?}");
                AllowOrigin::any()
            }
        },
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(cors)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    let v1 = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/answers", post(post_answer))
        .route("/sessions/{id}/recommendations", get(get_recommendations))
        .route("/questions", get(get_questions))
        .route("/healthz", get(healthz))
        .route("/model/info", get(model_info));
    Router::new()
        .nest("/v1", v1)
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .layer(cors)
        .with_state(engine)
}

async fn create_session(State(engine): AppState) -> Result<impl IntoResponse, ApiError> {
    Ok((axum::http::StatusCode::CREATED, Json(engine.create_session()?)))
}

async fn get_session(State(engine): AppState, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(engine.session_view(&id)?))
}

async fn post_answer(
    State(engine): AppState,
    Path(id): Path<String>,
    body: Result<Json<AnswerRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::invalid(e.body_text()))?;
    Ok(Json(engine.answer(&id, req.question_id, req.raw_index, req.finish)?))
}

async fn get_recommendations(State(engine): AppState, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(engine.recommendations(&id)?))
}

async fn get_questions(State(engine): AppState) -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "application/json")], engine.questionnaire_json().to_owned())
}

async fn healthz(State(engine): AppState) -> impl IntoResponse {
    Json(HealthBody { status: engine.health(), version: env!("CARGO_PKG_VERSION") })
}

async fn model_info(State(engine): AppState) -> impl IntoResponse {
    Json(engine.model_info())
}

/// Serves the API on `listener` until `shutdown` resolves, sweeping abandoned sessions in the background.
pub async fn serve(
    engine: Arc<Engine>,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let sweep_every = engine.config().abandon_after().clamp(Duration::from_secs(1), Duration::from_secs(60));
    let sweeper = {
        let engine = engine.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(sweep_every);
            loop {
                tick.tick().await;
                match engine.sweep_abandoned(chrono::Utc::now()) {
                    Ok(0) => {}
                    Ok(n) => log::info!("closed {n} abandoned sessions"),
                    Err(e) => log::error!("abandonment sweep failed: {e}"),
                }
            }
        })
    };
    let result = axum::serve(listener, router(engine)).with_graceful_shutdown(shutdown).await;
    sweeper.abort();
    result.map_err(ServiceError::Io)
}
