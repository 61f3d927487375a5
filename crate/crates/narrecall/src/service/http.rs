use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use narrecall_core::session::{SessionError, State as SessionState, Task};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ExperimentService, ExportFilter, ServiceError};

type Shared = Arc<ExperimentService>;

impl ServiceError {
    /// Stable machine-readable error code used in response bodies.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) | ServiceError::UnknownNarrative(_) => "not_found",
            ServiceError::MissingLures(_) | ServiceError::Corpus(_) => "configuration",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Session(e) => match e {
                SessionError::State { .. } | SessionError::WrongTask { .. } => "state",
                SessionError::Sequence(_) => "sequence",
                SessionError::RecallConflict | SessionError::AlreadyAnswered(_) => "conflict",
                SessionError::UnknownSession(_) => "not_found",
                _ => "internal",
            },
            ServiceError::Log(_) | ServiceError::Io(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self.code() {
            "not_found" => StatusCode::NOT_FOUND,
            "configuration" => StatusCode::UNPROCESSABLE_ENTITY,
            "bad_request" => StatusCode::BAD_REQUEST,
            "state" | "sequence" | "conflict" => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = json!({"error": self.code(), "message": self.to_string()});
        (self.status(), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ServiceError>;

#[derive(Debug, Deserialize)]
struct CreateBody {
    participant_id: String,
    narrative_id: String,
    task: Task,
}

#[derive(Debug, Deserialize)]
struct FinishedBody {
    elapsed_s: f64,
}

#[derive(Debug, Deserialize)]
struct RecallBody {
    text: String,
}

#[derive(Debug, Deserialize)]
struct AnswerBody {
    response_yes: bool,
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    #[serde(default)]
    filter: String,
}

#[derive(Debug, Serialize)]
struct SessionView {
    session_id: String,
    participant_id: String,
    narrative_id: String,
    task: Task,
    state: SessionState,
    probes_answered: usize,
    /// Position served but not yet answered, if any.
    pending_probe: Option<u8>,
}

async fn create(
    State(svc): State<Shared>,
    Json(b): Json<CreateBody>,
) -> Result<impl IntoResponse, ServiceError> {
    let created = svc.create_session(&b.participant_id, &b.narrative_id, b.task)?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn consent(
    State(svc): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<serde_json::Value> {
    let state = svc.consent(&id)?;
    Ok(Json(json!({"state": state})))
}

async fn stimulus(State(svc): State<Shared>, Path(id): Path<String>) -> ApiResult<super::Stimulus> {
    Ok(Json(svc.stimulus(&id)?))
}

async fn finished(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Json(b): Json<FinishedBody>,
) -> ApiResult<super::PresentationAck> {
    Ok(Json(svc.presentation_finished(&id, b.elapsed_s)?))
}

async fn recall(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Json(b): Json<RecallBody>,
) -> ApiResult<serde_json::Value> {
    let token = svc.submit_recall(&id, &b.text)?;
    Ok(Json(json!({"token": token})))
}

async fn next_probe(
    State(svc): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<narrecall_core::session::NextProbe> {
    Ok(Json(svc.next_probe(&id)?))
}

async fn answer(
    State(svc): State<Shared>,
    Path((id, position)): Path<(String, u8)>,
    Json(b): Json<AnswerBody>,
) -> ApiResult<super::AnswerAck> {
    Ok(Json(svc.answer_probe(&id, position, b.response_yes)?))
}

async fn session(State(svc): State<Shared>, Path(id): Path<String>) -> ApiResult<SessionView> {
    let s = svc.session(&id)?;
    let answered = s.answers.len();
    Ok(Json(SessionView {
        pending_probe: (s.served as usize > answered).then_some(s.served),
        probes_answered: answered,
        session_id: s.session_id,
        participant_id: s.participant_id,
        narrative_id: s.narrative_id,
        task: s.task,
        state: s.state,
    }))
}

async fn export(
    State(svc): State<Shared>,
    Query(q): Query<ExportQuery>,
) -> ApiResult<super::Export> {
    let filter = ExportFilter::parse(&q.filter)?;
    Ok(Json(svc.export(&filter)))
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

pub fn router(service: Arc<ExperimentService>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(session))
        .route("/sessions/{id}/consent", post(consent))
        .route("/sessions/{id}/stimulus", get(stimulus))
        .route("/sessions/{id}/presentation-finished", post(finished))
        .route("/sessions/{id}/recall", post(recall))
        .route("/sessions/{id}/probes/next", get(next_probe))
        .route("/sessions/{id}/probes/{position}/answer", post(answer))
        .route("/export", get(export))
        .with_state(service)
}

/// Serves until Ctrl-C.
pub async fn serve(service: Arc<ExperimentService>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
