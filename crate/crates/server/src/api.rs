use std::convert::Infallible;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, Sse};
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::{DateTime, Utc};
use futures::stream;
use seekersim_core::domain::{Annotations, Gender, RelationshipStatus, SeekerProfile, SessionTranscript, Utterance};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{ApiError, ApiResult};
use crate::state::AppState;

/// What a trainee may see about a seeker. The complaint seed and style
/// constraints are only shown in trainer mode.
#[derive(Debug, Clone, Serialize)]
pub struct SeekerView {
    pub id: String,
    pub age: u32,
    pub gender: Gender,
    pub job: String,
    pub relationship_status: RelationshipStatus,
    pub background: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub complaint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub style_constraints: Option<Vec<String>>,
}

impl SeekerView {
    fn of(p: SeekerProfile, trainer: bool) -> Self {
        SeekerView {
            id: p.id,
            age: p.profile.age,
            gender: p.profile.gender,
            job: p.profile.job,
            relationship_status: p.profile.relationship_status,
            background: p.profile.background,
            complaint: trainer.then_some(p.complaint),
            style_constraints: trainer.then_some(p.style_constraints),
        }
    }
}

pub(crate) fn visible_utterance(mut u: Utterance, trainer: bool) -> Utterance {
    if !trainer {
        u.annotations = Annotations::default();
    }
    u
}

pub(crate) fn visible_transcript(mut t: SessionTranscript, trainer: bool) -> SessionTranscript {
    if !trainer {
        t.meta.chain = None;
        for u in &mut t.utterances {
            u.annotations = Annotations::default();
        }
    }
    t
}

pub async fn health() -> &'static str {
    "ok"
}

pub async fn info(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({
        "trainer_mode": state.trainer_mode(),
        "ttl_secs": state.options().ttl.as_secs(),
        "seekers": state.seekers().len(),
        "open_sessions": state.open_session_count(),
        "backends": state.engine().backends().ids(),
        "version": env!("CARGO_PKG_VERSION"),
    }))
}

pub async fn list_seekers(State(state): State<AppState>) -> Json<Vec<SeekerView>> {
    let trainer = state.trainer_mode();
    Json(state.seekers().into_iter().map(|p| SeekerView::of(p, trainer)).collect())
}

pub async fn get_seeker(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SeekerView>> {
    let p = state
        .seeker(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown seeker `{id}`")))?;
    Ok(Json(SeekerView::of(p, state.trainer_mode())))
}

pub async fn create_seeker(
    State(state): State<AppState>,
    Json(profile): Json<SeekerProfile>,
) -> ApiResult<(StatusCode, Json<SeekerView>)> {
    state.add_seeker(profile.clone())?;
    Ok((StatusCode::CREATED, Json(SeekerView::of(profile, state.trainer_mode()))))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionInfo {
    pub token: String,
    pub seeker_id: String,
    pub session_id: String,
    pub opened_at: DateTime<Utc>,
    pub utterances: usize,
    pub idle_secs: f64,
}

pub async fn open_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<(StatusCode, Json<SessionInfo>)> {
    let live = state.open(&id).await?;
    Ok((
        StatusCode::CREATED,
        Json(SessionInfo {
            token: live.token.clone(),
            seeker_id: live.seeker_id.clone(),
            session_id: live.session_id.clone(),
            opened_at: live.opened_at,
            utterances: 0,
            idle_secs: 0.0,
        }),
    ))
}

pub async fn session_info(State(state): State<AppState>, Path(token): Path<String>) -> ApiResult<Json<SessionInfo>> {
    let live = state.live(&token)?;
    let utterances = match live.runtime.try_lock() {
        Ok(g) => g.as_ref().map(|rt| rt.transcript().utterances.len()).unwrap_or(0),
        Err(_) => return Err(ApiError::conflict("a message for this session is already being processed")),
    };
    Ok(Json(SessionInfo {
        token: live.token.clone(),
        seeker_id: live.seeker_id.clone(),
        session_id: live.session_id.clone(),
        opened_at: live.opened_at,
        utterances,
        idle_secs: live.idle_for().as_secs_f64(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct MessageRequest {
    pub content: String,
    #[serde(default)]
    pub stream: bool,
}

/// The reply is generated whole; streaming splits it into word chunks
/// followed by an `utterance` event carrying the full record.
fn stream_utterance(u: Utterance) -> Response {
    let mut events: Vec<Result<Event, Infallible>> = split_words(&u.text)
        .into_iter()
        .map(|w| Ok(Event::default().event("delta").data(w)))
        .collect();
    let full = serde_json::to_string(&u).unwrap_or_default();
    events.push(Ok(Event::default().event("utterance").data(full)));
    Sse::new(stream::iter(events)).into_response()
}

/// Words with their trailing whitespace, so the chunks concatenate back to
/// the original text.
pub(crate) fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if !c.is_whitespace() && cur.ends_with(char::is_whitespace) {
            out.push(std::mem::take(&mut cur));
        }
        cur.push(c);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub async fn post_message(
    State(state): State<AppState>,
    Path(token): Path<String>,
    Json(req): Json<MessageRequest>,
) -> ApiResult<Response> {
    let u = visible_utterance(state.message(&token, &req.content).await?, state.trainer_mode());
    if req.stream {
        Ok(stream_utterance(u))
    } else {
        Ok(Json(u).into_response())
    }
}

pub async fn transcript(
    State(state): State<AppState>,
    Path(token): Path<String>,
) -> ApiResult<Json<SessionTranscript>> {
    let live = state.live(&token)?;
    let Ok(guard) = live.runtime.try_lock() else {
        return Err(ApiError::conflict("a message for this session is already being processed"));
    };
    let t = guard
        .as_ref()
        .map(|rt| rt.transcript().clone())
        .ok_or_else(|| ApiError::not_found("unknown or expired session"))?;
    Ok(Json(visible_transcript(t, state.trainer_mode())))
}

#[derive(Debug, Default, Deserialize)]
pub struct CloseRequest {
    #[serde(default)]
    pub report: Option<String>,
}

pub async fn close(
    State(state): State<AppState>,
    Path(token): Path<String>,
    body: Option<Json<CloseRequest>>,
) -> ApiResult<Json<SessionTranscript>> {
    let report = body.and_then(|Json(b)| b.report);
    let t = state.close(&token, report).await?;
    Ok(Json(visible_transcript(t, state.trainer_mode())))
}

pub async fn debug(
    State(state): State<AppState>,
    Path(token): Path<String>,
) -> ApiResult<Json<seekersim_core::orchestrator::DebugState>> {
    if !state.trainer_mode() {
        return Err(ApiError::forbidden("debug state is only available in trainer mode"));
    }
    let live = state.live(&token)?;
    let Ok(guard) = live.runtime.try_lock() else {
        return Err(ApiError::conflict("a message for this session is already being processed"));
    };
    guard
        .as_ref()
        .map(|rt| Json(rt.debug_state()))
        .ok_or_else(|| ApiError::not_found("unknown or expired session"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchivedSummary {
    pub session_id: String,
    pub opened_at: DateTime<Utc>,
    pub closed_at: Option<DateTime<Utc>>,
    pub utterances: usize,
    pub incomplete: bool,
    pub has_report: bool,
}

fn known_seeker(state: &AppState, id: &str) -> ApiResult<()> {
    state
        .seeker(id)
        .map(|_| ())
        .ok_or_else(|| ApiError::not_found(format!("unknown seeker `{id}`")))
}

pub async fn list_archive(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<ArchivedSummary>>> {
    known_seeker(&state, &id)?;
    let list = state
        .archive_of(&id)?
        .into_iter()
        .map(|t| ArchivedSummary {
            session_id: t.meta.session_id,
            opened_at: t.meta.opened_at,
            closed_at: t.meta.closed_at,
            utterances: t.utterances.len(),
            incomplete: t.meta.incomplete,
            has_report: t.meta.report.is_some(),
        })
        .collect();
    Ok(Json(list))
}

pub async fn get_archived(
    State(state): State<AppState>,
    Path((id, session_id)): Path<(String, String)>,
) -> ApiResult<Json<SessionTranscript>> {
    known_seeker(&state, &id)?;
    let t = state
        .archive_of(&id)?
        .into_iter()
        .find(|t| t.session_id() == session_id)
        .ok_or_else(|| ApiError::not_found(format!("no archived session `{session_id}`")))?;
    Ok(Json(visible_transcript(t, state.trainer_mode())))
}
