//! Researcher API, participant entry and health check.

use axum::body::Bytes;
use axum::extract::{ConnectInfo, FromRequestParts, Path, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{async_trait, Json, Router};
use colloquy::bot::ProviderKind;
use colloquy::export::ExportKind;
use colloquy::ids::{AccountId, RoomId, SlotIndex, StudyId, SurveyId};
use colloquy::platform::{PlatformError, SlotSettings, SurveyDraft};
use colloquy::randomizer::Condition;
use colloquy::registry::{RoomConfig, StudyType};
use colloquy::survey::Question;
use serde::Deserialize;
use serde_json::json;
use std::net::SocketAddr;

use crate::AppState;

/// A platform error as an HTTP response: `{code, message}` with a status
/// chosen from the code.
pub struct ApiError(pub PlatformError);

impl From<PlatformError> for ApiError {
    fn from(e: PlatformError) -> Self {
        ApiError(e)
    }
}

pub fn status_for(code: &str) -> StatusCode {
    match code {
        "invalid_session" | "bad_credentials" => StatusCode::UNAUTHORIZED,
        "not_authorized" | "not_owner" => StatusCode::FORBIDDEN,
        "account_locked" => StatusCode::LOCKED,
        "rate_limited" => StatusCode::TOO_MANY_REQUESTS,
        "session_over" => StatusCode::GONE,
        "email_taken" | "room_locked" | "already_connected" => StatusCode::CONFLICT,
        "internal" | "storage" | "duplicate_code_after_retries" => StatusCode::INTERNAL_SERVER_ERROR,
        c if c.starts_with("unknown_") => StatusCode::NOT_FOUND,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let code = self.0.code();
        let body = Json(json!({"code": code, "message": self.0.to_string()}));
        (status_for(code), body).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// The account behind an `Authorization: Bearer` header.
pub struct Researcher(pub AccountId);

pub(crate) fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

#[async_trait]
impl FromRequestParts<AppState> for Researcher {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let token = bearer(&parts.headers).ok_or(PlatformError::Auth(colloquy::auth::AuthError::InvalidSession))?;
        Ok(Researcher(state.platform.session_account(token)?))
    }
}

pub fn routes() -> Router<AppState> {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/join/:token", get(join))
        .route("/api/register", post(register))
        .route("/api/login", post(login))
        .route("/api/settings/api-keys/:provider", put(store_key))
        .route("/api/studies", post(create_study).get(list_studies))
        .route("/api/studies/:id", get(get_study))
        .route("/api/studies/:id/collaborators", post(add_collaborator))
        .route("/api/studies/:id/conditions", post(set_conditions))
        .route("/api/studies/:id/rooms/bulk", post(bulk_rooms))
        .route("/api/studies/:id/rooms", get(list_rooms))
        .route("/api/studies/:id/export/:file", get(export_study))
        .route("/api/rooms/:id", get(get_room))
        .route("/api/rooms/:id/config", put(room_config))
        .route("/api/rooms/:id/slots/:slot", put(configure_slot))
        .route("/api/rooms/:id/slots/:slot/url", get(participant_url))
        .route("/api/rooms/:id/assign-condition", post(assign_condition))
        .route("/api/rooms/:id/shuffle-slots", post(shuffle_slots))
        .route("/api/rooms/:id/inject", post(inject))
        .route("/api/rooms/:id/transcript", get(transcript))
        .route("/api/rooms/:id/surveys/:sid/push", post(push_survey))
        .route("/api/rooms/:id/export/:file", get(export_room))
        .route("/api/surveys", post(define_survey))
        .route("/api/surveys/:id", get(get_survey))
        .route("/api/library/questions", get(library).post(save_question))
}

#[derive(Deserialize)]
struct Credentials {
    email: String,
    password: String,
}

async fn register(State(s): State<AppState>, Json(c): Json<Credentials>) -> ApiResult<impl IntoResponse> {
    let platform = s.platform.clone();
    let id = tokio::task::spawn_blocking(move || platform.register(&c.email, &c.password))
        .await
        .expect("register task")?;
    Ok((StatusCode::CREATED, Json(json!({"account_id": id}))))
}

async fn login(
    State(s): State<AppState>,
    peer: Option<ConnectInfo<SocketAddr>>,
    Json(c): Json<Credentials>,
) -> ApiResult<impl IntoResponse> {
    let ip = peer.map(|ConnectInfo(a)| a.ip().to_string()).unwrap_or_else(|| "unknown".into());
    let platform = s.platform.clone();
    let token = tokio::task::spawn_blocking(move || platform.login(&c.email, &c.password, &ip))
        .await
        .expect("login task")?;
    Ok(Json(json!({"token": token.0})))
}

#[derive(Deserialize)]
struct ApiKey {
    key: String,
}

async fn store_key(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Path(provider): Path<String>,
    Json(k): Json<ApiKey>,
) -> Response {
    let Some(kind) = ProviderKind::parse(&provider) else {
        return (
            StatusCode::NOT_FOUND,
            Json(json!({"code": "unknown_provider", "message": format!("unknown provider {provider}")})),
        )
            .into_response();
    };
    match s.platform.store_provider_key(me, kind, &k.key) {
        Ok(()) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => ApiError(e).into_response(),
    }
}

#[derive(Deserialize)]
struct NewStudy {
    name: String,
    study_type: StudyType,
}

async fn create_study(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Json(b): Json<NewStudy>,
) -> ApiResult<impl IntoResponse> {
    let study = s.platform.create_study(me, &b.name, b.study_type)?;
    Ok((StatusCode::CREATED, Json(study)))
}

async fn list_studies(State(s): State<AppState>, Researcher(me): Researcher) -> impl IntoResponse {
    Json(s.platform.studies_of(me))
}

async fn get_study(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Path(id): Path<StudyId>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.platform.study(me, id)?))
}

#[derive(Deserialize)]
struct Collaborator {
    email: String,
}

async fn add_collaborator(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Path(id): Path<StudyId>,
    Json(b): Json<Collaborator>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.platform.add_collaborator(id, me, &b.email)?))
}

#[derive(Deserialize)]
struct Pool {
    conditions: Vec<Condition>,
}

async fn set_conditions(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Path(id): Path<StudyId>,
    Json(b): Json<Pool>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.platform.set_conditions(me, id, b.conditions)?))
}

async fn bulk_rooms(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Path(id): Path<StudyId>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let rooms = s.platform.create_rooms_csv(me, id, &body)?;
    Ok((StatusCode::CREATED, Json(rooms)))
}

async fn list_rooms(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Path(id): Path<StudyId>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.platform.rooms_of(me, id)?))
}

async fn get_room(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Path(id): Path<RoomId>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.platform.room(me, id)?))
}

async fn room_config(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Path(id): Path<RoomId>,
    Json(config): Json<RoomConfig>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.platform.update_room_config(me, id, config)?))
}

async fn configure_slot(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Path((id, slot)): Path<(RoomId, SlotIndex)>,
    Json(settings): Json<SlotSettings>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.platform.configure_slot(me, id, slot, settings)?))
}

async fn participant_url(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Path((id, slot)): Path<(RoomId, SlotIndex)>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(json!({"url": s.platform.issue_participant_url(me, id, slot)?})))
}

async fn assign_condition(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Path(id): Path<RoomId>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(json!({"condition_label": s.platform.assign_condition(me, id)?})))
}

async fn shuffle_slots(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Path(id): Path<RoomId>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(json!({"permutation": s.platform.shuffle_slots(me, id)?})))
}

#[derive(Deserialize)]
struct Injection {
    text: String,
}

async fn inject(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Path(id): Path<RoomId>,
    Json(b): Json<Injection>,
) -> ApiResult<impl IntoResponse> {
    Ok((StatusCode::CREATED, Json(s.platform.inject(me, id, &b.text)?)))
}

async fn transcript(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Path(id): Path<RoomId>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.platform.transcript(me, id)?))
}

async fn push_survey(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Path((id, sid)): Path<(RoomId, SurveyId)>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(json!({"presented": s.platform.push_survey(me, id, sid)?})))
}

async fn define_survey(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Json(draft): Json<SurveyDraft>,
) -> ApiResult<impl IntoResponse> {
    Ok((StatusCode::CREATED, Json(s.platform.define_survey(me, draft)?)))
}

async fn get_survey(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Path(id): Path<SurveyId>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.platform.survey(me, id)?))
}

async fn library(State(s): State<AppState>, Researcher(me): Researcher) -> impl IntoResponse {
    Json(s.platform.library_questions(me))
}

async fn save_question(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Json(q): Json<Question>,
) -> ApiResult<impl IntoResponse> {
    Ok((StatusCode::CREATED, Json(s.platform.save_question(me, q)?)))
}

fn export_kind(file: &str) -> Option<ExportKind> {
    [ExportKind::Chat, ExportKind::Survey]
        .into_iter()
        .find(|k| k.file_name() == file)
}

fn csv_response(file: &str, body: Vec<u8>) -> Response {
    (
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8".to_owned()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{file}\"")),
        ],
        body,
    )
        .into_response()
}

fn not_found() -> Response {
    (
        StatusCode::NOT_FOUND,
        Json(json!({"code": "unknown_export", "message": "export files are chat.csv and surveys.csv"})),
    )
        .into_response()
}

async fn export_room(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Path((id, file)): Path<(RoomId, String)>,
) -> Response {
    let Some(kind) = export_kind(&file) else { return not_found() };
    match s.platform.export_room(me, id, kind) {
        Ok(body) => csv_response(&file, body),
        Err(e) => ApiError(e).into_response(),
    }
}

async fn export_study(
    State(s): State<AppState>,
    Researcher(me): Researcher,
    Path((id, file)): Path<(StudyId, String)>,
) -> Response {
    let Some(kind) = export_kind(&file) else { return not_found() };
    match s.platform.export_study(me, id, kind) {
        Ok(body) => csv_response(&file, body),
        Err(e) => ApiError(e).into_response(),
    }
}

/// Participant entry: where the session channel for this link lives.
async fn join(State(s): State<AppState>, Path(token): Path<String>) -> ApiResult<impl IntoResponse> {
    let target = s.platform.resolve_token(&token)?;
    Ok(Json(json!({
        "room_id": target.room_id,
        "slot_index": target.slot_index,
        "channel": format!("/ws/session/{token}"),
    })))
}
