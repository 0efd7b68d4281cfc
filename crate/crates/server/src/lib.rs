//! HTTP service in front of the seeker simulator.
//!
//! Trainees open sessions against configured seekers and exchange messages;
//! counselor programs can use the chat-completion compatible endpoint.
//! Hidden state (emotion, complaint stage, reminders) is only returned when
//! the service runs in trainer mode.

mod api;
mod error;
mod openai;
mod state;

use std::time::Duration;

use axum::routing::{get, post};
use axum::Router;

pub use api::{ArchivedSummary, SeekerView, SessionInfo};
pub use error::{ApiError, ApiResult};
pub use state::{AppState, ServiceOptions};

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(api::health))
        .route("/info", get(api::info))
        .route("/seekers", get(api::list_seekers).post(api::create_seeker))
        .route("/seekers/{id}", get(api::get_seeker))
        .route("/seekers/{id}/sessions", post(api::open_session))
        .route("/seekers/{id}/archive", get(api::list_archive))
        .route("/seekers/{id}/archive/{session_id}", get(api::get_archived))
        .route("/sessions/{token}", get(api::session_info))
        .route("/sessions/{token}/messages", post(api::post_message))
        .route("/sessions/{token}/transcript", get(api::transcript))
        .route("/sessions/{token}/close", post(api::close))
        .route("/sessions/{token}/debug", get(api::debug))
        .route("/sessions/{token}/v1/chat/completions", post(openai::by_path))
        .route("/v1/chat/completions", post(openai::by_model))
        .with_state(state)
}

/// Starts the TTL reaper and, when an archive directory and interval are
/// configured, periodic snapshots of open transcripts.
pub fn spawn_maintenance(state: &AppState) -> Vec<tokio::task::JoinHandle<()>> {
    let mut tasks = Vec::new();
    let tick = (state.options().ttl / 4).clamp(Duration::from_millis(10), Duration::from_secs(30));
    let s = state.clone();
    tasks.push(tokio::spawn(async move {
        let mut every = tokio::time::interval(tick);
        loop {
            every.tick().await;
            let n = s.reap_expired();
            if n > 0 {
                tracing::info!(closed = n, "expired sessions archived");
            }
        }
    }));
    let snap = state.options().snapshot_every;
    if !snap.is_zero() && state.options().archive.is_some() {
        let s = state.clone();
        tasks.push(tokio::spawn(async move {
            let mut every = tokio::time::interval(snap);
            every.tick().await;
            loop {
                every.tick().await;
                if let Err(e) = s.snapshot() {
                    tracing::warn!(error = %e, "snapshot failed");
                }
            }
        }));
    }
    tasks
}

/// Serves until ctrl-c, then archives every open session.
pub async fn serve(state: AppState, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    let tasks = spawn_maintenance(&state);
    let app = router(state.clone());
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    for t in tasks {
        t.abort();
    }
    for e in state.close_all().await {
        tracing::warn!(error = %e, "could not archive session on shutdown");
    }
    Ok(())
}
