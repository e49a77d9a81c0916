//! HTTP routes. Every error body is `{"error": {"code", "message"}}`.

use std::sync::{Arc, OnceLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Multipart, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use medrag_core::corpus::EhrRecord;
use medrag_core::orchestrator::{
    ConsultationSession, EvidenceKind, Recommendation, SessionStatus, TurnError, TurnMode, TurnOutcome,
};
use medrag_core::transcribe::TranscriptionError;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::Assets;
use crate::store::{SessionLog, SessionStore};

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request("invalid_body", r.body_text())
    }
}

impl From<TurnError> for ApiError {
    fn from(e: TurnError) -> Self {
        let msg = e.to_string();
        match e {
            TurnError::Concluded => ApiError::new(StatusCode::CONFLICT, "session_concluded", msg),
            TurnError::EmptyEvidence | TurnError::EmptySession => ApiError::bad_request("empty_evidence", msg),
            TurnError::LlmUnavailable(_) => ApiError::new(StatusCode::BAD_GATEWAY, "llm_unavailable", msg),
            TurnError::ParseFailure { ref raw, .. } => {
                ApiError::new(StatusCode::BAD_GATEWAY, "llm_parse_failure", format!("{msg}; raw reply: {raw}"))
            }
            ref other if other.is_upstream() => ApiError::new(StatusCode::BAD_GATEWAY, "encoder_unavailable", msg),
            _ => ApiError::bad_request("invalid_input", msg),
        }
    }
}

impl From<TranscriptionError> for ApiError {
    fn from(e: TranscriptionError) -> Self {
        match e {
            TranscriptionError::UnknownAudio(_) => ApiError::bad_request("unknown_audio", e.to_string()),
            TranscriptionError::Unavailable(_) => {
                ApiError::new(StatusCode::BAD_GATEWAY, "transcriber_unavailable", e.to_string())
            }
        }
    }
}

struct Shared {
    assets: OnceLock<Assets>,
    store: SessionStore,
    log: Option<SessionLog>,
    auth_token: Option<String>,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    /// A state with no assets yet; every session route answers 503 until
    /// [`AppState::install`] is called.
    pub fn new(auth_token: Option<String>, log: Option<SessionLog>) -> Self {
        Self(Arc::new(Shared {
            assets: OnceLock::new(),
            store: SessionStore::default(),
            log,
            auth_token,
        }))
    }

    /// Returns false if assets were already installed.
    pub fn install(&self, assets: Assets) -> bool {
        self.0.assets.set(assets).is_ok()
    }

    pub fn is_ready(&self) -> bool {
        self.0.assets.get().is_some()
    }

    pub fn store(&self) -> &SessionStore {
        &self.0.store
    }

    fn assets(&self) -> Result<&Assets, ApiError> {
        self.0
            .assets
            .get()
            .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "not_ready", "assets are still loading"))
    }

    fn persist(&self, session: &ConsultationSession) -> Result<(), ApiError> {
        if let Some(log) = &self.0.log {
            log.append(session)
                .map_err(|e| ApiError::internal(format!("session log {}: {e}", log.path().display())))?;
        }
        Ok(())
    }
}

/// Session state as served to clients, with the outcome of the turn the
/// request ran, if any.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionView {
    #[serde(flatten)]
    pub session: ConsultationSession,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<TurnOutcome>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub status: SessionStatus,
    pub rounds_used: u32,
    pub evidence_count: usize,
}

#[derive(Debug, Deserialize)]
pub struct UtteranceBody {
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub audio_ref: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct QueryBody {
    pub text: String,
}

enum Input {
    Text(String),
    Audio(String),
}

pub fn router(state: AppState) -> Router {
    let sessions = Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/utterances", post(post_utterance))
        .route("/sessions/{id}/ehr", post(post_ehr))
        .route("/query", post(query))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/healthz", get(healthz))
        .merge(sessions)
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .with_state(state)
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.0.auth_token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token")
                .into_response();
        }
    }
    next.run(req).await
}

async fn healthz(State(state): State<AppState>) -> Json<serde_json::Value> {
    match state.0.assets.get() {
        None => Json(json!({"ready": false})),
        Some(a) => Json(json!({
            "ready": true,
            "corpus_records": a.engine.corpus().len(),
            "kg_tiers": a.engine.kg().tier_counts(),
            "encoder": a.engine.encoder().descriptor().name,
            "llm": a.llm.name(),
            "sessions": state.store().len(),
        })),
    }
}

async fn create_session(State(state): State<AppState>) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    state.assets()?;
    let slot = state.store().create();
    let session = (*slot.snapshot()).clone();
    state.persist(&session)?;
    Ok((StatusCode::CREATED, Json(SessionView { session, outcome: None })))
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<SessionSummary>> {
    Json(
        state
            .store()
            .snapshots()
            .iter()
            .map(|s| SessionSummary {
                id: s.id.clone(),
                status: s.status(),
                rounds_used: s.rounds_used(),
                evidence_count: s.evidence().len(),
            })
            .collect(),
    )
}

fn not_found(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "session_not_found", format!("no session `{id}`"))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let slot = state.store().get(&id).ok_or_else(|| not_found(&id))?;
    Ok(Json(SessionView {
        session: (*slot.snapshot()).clone(),
        outcome: None,
    }))
}

async fn post_utterance(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<UtteranceBody>, JsonRejection>,
) -> Result<Json<SessionView>, ApiError> {
    let Json(body) = body?;
    let input = match (body.text, body.audio_ref) {
        (Some(t), None) => Input::Text(t),
        (None, Some(a)) => Input::Audio(a),
        _ => return Err(ApiError::bad_request("invalid_body", "send exactly one of `text` or `audio_ref`")),
    };
    run_turn(&state, &id, EvidenceKind::Utterance, input).await
}

async fn post_ehr(
    State(state): State<AppState>,
    Path(id): Path<String>,
    mut multipart: Multipart,
) -> Result<Json<SessionView>, ApiError> {
    let field = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request("invalid_body", e.body_text()))?
        .ok_or_else(|| ApiError::bad_request("invalid_body", "multipart body has no file"))?;
    let bytes = field
        .bytes()
        .await
        .map_err(|e| ApiError::bad_request("invalid_body", e.body_text()))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| ApiError::bad_request("invalid_ehr", e.to_string()))?;
    let record: EhrRecord<f64> = EhrRecord::from_json(text).map_err(|e| ApiError::bad_request("invalid_ehr", e))?;
    run_turn(&state, &id, EvidenceKind::UploadedEhr, Input::Text(record.document_text())).await
}

/// Appends one piece of evidence and runs a turn, all on a private copy of
/// the session that is published only if everything succeeds.
async fn run_turn(state: &AppState, id: &str, kind: EvidenceKind, input: Input) -> Result<Json<SessionView>, ApiError> {
    let assets = state.assets()?;
    let slot = state.store().get(id).ok_or_else(|| not_found(id))?;
    let _writer = slot.writer.lock().await;
    let mut session = (*slot.snapshot()).clone();
    if session.status() == SessionStatus::Concluded {
        return Err(TurnError::Concluded.into());
    }
    let (engine, llm, stt) = (assets.engine.clone(), assets.llm.clone(), assets.transcriber.clone());
    let (session, outcome) = tokio::task::spawn_blocking(move || -> Result<_, ApiError> {
        let text = match input {
            Input::Text(t) => t,
            Input::Audio(r) => stt.transcribe(&r)?,
        };
        session.add_evidence(kind, &text)?;
        let outcome = engine.run_turn(&mut session, &*llm, TurnMode::Interactive)?;
        Ok((session, outcome))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    state.persist(&session)?;
    slot.publish(session.clone());
    Ok(Json(SessionView {
        session,
        outcome: Some(outcome),
    }))
}

async fn query(
    State(state): State<AppState>,
    body: Result<Json<QueryBody>, JsonRejection>,
) -> Result<Json<Recommendation>, ApiError> {
    let Json(body) = body?;
    let assets = state.assets()?;
    if body.text.trim().is_empty() {
        return Err(ApiError::bad_request("empty_evidence", "query text is empty"));
    }
    let (engine, llm) = (assets.engine.clone(), assets.llm.clone());
    let outcome = tokio::task::spawn_blocking(move || -> Result<_, ApiError> {
        let mut session = ConsultationSession::new("query");
        session.add_evidence(EvidenceKind::TypedQuery, &body.text)?;
        Ok(engine.run_turn(&mut session, &*llm, TurnMode::RecommendOnly)?)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    match outcome {
        TurnOutcome::Recommendation(r) => Ok(Json(r)),
        TurnOutcome::FollowUp(_) => Err(ApiError::internal("recommend-only turn asked a question")),
    }
}
