//! Chat-completion compatible front door. A counselor client points its base
//! URL at `/sessions/{token}/v1`, or at `/v1` with the session token as the
//! model name, and talks to the seeker as if it were a model.

use std::convert::Infallible;

use axum::extract::{Path, State};
use axum::response::sse::{Event, Sse};
use axum::response::{IntoResponse, Response};
use axum::Json;
use futures::stream;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::api::split_words;
use crate::error::{ApiError, ApiResult};
use crate::state::AppState;

#[derive(Debug, Deserialize)]
pub struct WireMessage {
    pub role: String,
    #[serde(default)]
    pub content: String,
}

#[derive(Debug, Deserialize)]
pub struct CompletionRequest {
    #[serde(default)]
    pub model: Option<String>,
    pub messages: Vec<WireMessage>,
    #[serde(default)]
    pub stream: bool,
}

/// The newest user turn is the counselor's message; earlier turns are
/// already in the seeker's own transcript.
fn counselor_message(req: &CompletionRequest) -> ApiResult<&str> {
    req.messages
        .iter()
        .rev()
        .find(|m| m.role == "user")
        .map(|m| m.content.as_str())
        .ok_or_else(|| ApiError::bad_request("request has no user message"))
}

async fn complete(state: AppState, token: String, req: CompletionRequest) -> ApiResult<Response> {
    let msg = counselor_message(&req)?;
    let u = state.message(&token, msg).await?;
    let id = format!("chatcmpl-{}-{}", u.session_id, u.turn_index);
    let created = chrono::Utc::now().timestamp();
    let model = req.model.clone().unwrap_or_else(|| token.clone());
    if !req.stream {
        return Ok(Json(json!({
            "id": id,
            "object": "chat.completion",
            "created": created,
            "model": model,
            "choices": [{
                "index": 0,
                "message": { "role": "assistant", "content": u.text },
                "finish_reason": "stop",
            }],
        }))
        .into_response());
    }
    let chunk = |delta: Value, finish: Value| {
        json!({
            "id": id,
            "object": "chat.completion.chunk",
            "created": created,
            "model": model,
            "choices": [{ "index": 0, "delta": delta, "finish_reason": finish }],
        })
        .to_string()
    };
    let mut events = vec![chunk(json!({ "role": "assistant" }), Value::Null)];
    events.extend(
        split_words(&u.text)
            .into_iter()
            .map(|w| chunk(json!({ "content": w }), Value::Null)),
    );
    events.push(chunk(json!({}), json!("stop")));
    events.push("[DONE]".to_string());
    let events: Vec<Result<Event, Infallible>> = events.into_iter().map(|d| Ok(Event::default().data(d))).collect();
    Ok(Sse::new(stream::iter(events)).into_response())
}

pub async fn by_model(State(state): State<AppState>, Json(req): Json<CompletionRequest>) -> ApiResult<Response> {
    let token = req
        .model
        .clone()
        .ok_or_else(|| ApiError::bad_request("`model` must be a session token"))?;
    complete(state, token, req).await
}

pub async fn by_path(
    State(state): State<AppState>,
    Path(token): Path<String>,
    Json(req): Json<CompletionRequest>,
) -> ApiResult<Response> {
    complete(state, token, req).await
}
