//! JSON-over-HTTP surface for interactive clients.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use riskscope_core::engine::{self, EngineConfig};
use riskscope_core::taxonomy::EntityKind;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::app::{App, AppError};
use crate::view::ApiSessionView;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

pub struct Failure(StatusCode, ApiError);

impl Failure {
    fn bad_request(message: impl Into<String>) -> Self {
        Failure(
            StatusCode::BAD_REQUEST,
            ApiError {
                code: "bad-request".into(),
                message: message.into(),
                detail: None,
            },
        )
    }
}

impl From<AppError> for Failure {
    fn from(err: AppError) -> Self {
        let code = err.code();
        let status = match code {
            "unknown-session" | "unknown-profile" => StatusCode::NOT_FOUND,
            "ineligible-question" | "conflict" | "pack-mismatch" | "stale-pack" => {
                StatusCode::CONFLICT
            }
            "unknown-question"
            | "invalid-answer"
            | "unknown-role"
            | "invalid-entity-id"
            | "no-extractable-answers" => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let detail = std::error::Error::source(&err).map(|s| s.to_string());
        Failure(
            status,
            ApiError {
                code: code.into(),
                message: err.to_string(),
                detail,
            },
        )
    }
}

impl From<JsonRejection> for Failure {
    fn from(rejection: JsonRejection) -> Self {
        Failure::bad_request(rejection.body_text())
    }
}

impl From<QueryRejection> for Failure {
    fn from(rejection: QueryRejection) -> Self {
        Failure::bad_request(rejection.body_text())
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = Result<T, Failure>;

pub struct ApiState {
    app: App,
    config: EngineConfig,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl ApiState {
    /// Writers to one session take its lock, so history is a total order.
    fn session_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.locks.lock().expect("lock table poisoned");
        locks.entry(id.to_owned()).or_default().clone()
    }

    fn view(
        &self,
        session: &riskscope_core::questionnaire::AssessmentSession,
    ) -> ApiResult<ApiSessionView> {
        ApiSessionView::project(&self.app.framework, session, &self.config)
            .map_err(|e| AppError::from(e).into())
    }
}

pub fn router(app: App, config: EngineConfig) -> Router {
    let state = Arc::new(ApiState {
        app,
        config,
        locks: Mutex::new(HashMap::new()),
    });
    Router::new()
        .route("/packs", get(packs))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(show_session))
        .route("/sessions/{id}/answers", post(post_answer))
        .route("/sessions/{id}/profiles", post(attach_profile))
        .route("/sessions/{id}/report", get(report))
        .route("/profiles", get(list_profiles).post(save_profile))
        .with_state(state)
}

type St = State<Arc<ApiState>>;

async fn packs(State(state): St) -> Json<serde_json::Value> {
    let fw = &state.app.framework;
    Json(json!({
        "version": fw.pack().version(),
        "pack_hash": fw.pack().content_hash(),
        "rules_hash": fw.rules().content_hash(),
        "pack": fw.pack(),
        "questionnaires": fw.questionnaires(),
        "rules": fw.rules().rules(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NewSession {
    pub use_title: String,
}

async fn create_session(
    State(state): St,
    body: Result<Json<NewSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<ApiSessionView>)> {
    let Json(body) = body?;
    let session = state.app.create_session(&body.use_title)?;
    Ok((StatusCode::CREATED, Json(state.view(&session)?)))
}

async fn show_session(State(state): St, Path(id): Path<String>) -> ApiResult<Json<ApiSessionView>> {
    let session = state.app.load_session(&id)?;
    Ok(Json(state.view(&session)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PostAnswer {
    pub question_id: String,
    /// As typed; parsed according to the question's kind.
    pub value: String,
    #[serde(default)]
    pub actor: Option<String>,
}

async fn post_answer(
    State(state): St,
    Path(id): Path<String>,
    body: Result<Json<PostAnswer>, JsonRejection>,
) -> ApiResult<Json<ApiSessionView>> {
    let Json(body) = body?;
    let lock = state.session_lock(&id);
    let _guard = lock.lock().await;
    let mut session = state.app.load_session(&id)?;
    state.app.answer(
        &mut session,
        &body.question_id,
        &body.value,
        body.actor.as_deref(),
    )?;
    Ok(Json(state.view(&session)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AttachProfile {
    pub entity_kind: EntityKind,
    pub entity_id: String,
    #[serde(default)]
    pub profile_hash: Option<String>,
}

async fn attach_profile(
    State(state): St,
    Path(id): Path<String>,
    body: Result<Json<AttachProfile>, JsonRejection>,
) -> ApiResult<Json<ApiSessionView>> {
    let Json(body) = body?;
    let lock = state.session_lock(&id);
    let _guard = lock.lock().await;
    let mut session = state.app.load_session(&id)?;
    state.app.attach_profile(
        &mut session,
        body.entity_kind,
        &body.entity_id,
        body.profile_hash.as_deref(),
    )?;
    Ok(Json(state.view(&session)?))
}

#[derive(Debug, Default, Deserialize)]
pub struct ReportQuery {
    #[serde(default)]
    pub format: Option<String>,
    #[serde(default)]
    pub unknown_flags: Option<bool>,
    #[serde(default)]
    pub reproducible: Option<bool>,
}

async fn report(
    State(state): St,
    Path(id): Path<String>,
    query: Result<Query<ReportQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(query) = query?;
    let session = state.app.load_session(&id)?;
    let mut config = state.config.clone();
    if let Some(flags) = query.unknown_flags {
        config.unknown_flags_default = flags;
    }
    let report = state
        .app
        .report(&session, &config, query.reproducible.unwrap_or(false))?;
    match query.format.as_deref().unwrap_or("json") {
        "json" => Ok(Json(report).into_response()),
        "markdown" => Ok((
            [(header::CONTENT_TYPE, "text/markdown; charset=utf-8")],
            engine::render_markdown(&report),
        )
            .into_response()),
        other => Err(Failure::bad_request(format!(
            "unknown report format `{other}`"
        ))),
    }
}

async fn list_profiles(State(state): St) -> ApiResult<Json<crate::profiles::ProfileIndex>> {
    Ok(Json(state.app.profiles.index().map_err(AppError::from)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SaveProfile {
    pub session_id: String,
    pub entity_kind: EntityKind,
    pub entity_id: String,
    #[serde(default)]
    pub actor: Option<String>,
}

async fn save_profile(
    State(state): St,
    body: Result<Json<SaveProfile>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<riskscope_core::profile::EntityProfile>)> {
    let Json(body) = body?;
    let session = state.app.load_session(&body.session_id)?;
    let profile = state.app.save_profile(
        &session,
        body.entity_kind,
        &body.entity_id,
        body.actor.as_deref(),
    )?;
    Ok((StatusCode::CREATED, Json(profile)))
}

/// Serve until the process is stopped.
pub async fn serve(
    app: App,
    config: EngineConfig,
    addr: std::net::SocketAddr,
) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(app, config)).await?;
    Ok(())
}
