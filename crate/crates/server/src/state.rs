use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use chrono::{DateTime, Utc};
use seekersim_core::config::RuntimeConfig;
use seekersim_core::domain::{SeekerProfile, SessionTranscript, Utterance};
use seekersim_core::memory::MemoryStore;
use seekersim_core::orchestrator::{open_session, persist, Engine, SessionRuntime};
use seekersim_core::{Error, Result};
use tokio::time::Instant;

use crate::error::{ApiError, ApiResult};

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceOptions {
    /// Sessions idle for this long are closed and archived.
    pub ttl: Duration,
    pub trainer_mode: bool,
    /// Where closed sessions (and snapshots of open ones) are written.
    pub archive: Option<PathBuf>,
    /// Zero disables periodic snapshots.
    pub snapshot_every: Duration,
}

impl ServiceOptions {
    pub fn from_config(cfg: &RuntimeConfig) -> Self {
        ServiceOptions {
            ttl: Duration::from_secs(cfg.service.ttl_secs),
            trainer_mode: cfg.service.trainer_mode,
            archive: cfg.paths.archive.clone(),
            snapshot_every: Duration::from_secs(cfg.service.snapshot_secs),
        }
    }
}

impl Default for ServiceOptions {
    fn default() -> Self {
        ServiceOptions {
            ttl: Duration::from_secs(1800),
            trainer_mode: false,
            archive: None,
            snapshot_every: Duration::ZERO,
        }
    }
}

pub(crate) struct LiveSession {
    pub token: String,
    pub seeker_id: String,
    pub session_id: String,
    pub opened_at: DateTime<Utc>,
    /// `None` once the session has been closed.
    pub runtime: tokio::sync::Mutex<Option<SessionRuntime>>,
    last_seen: Mutex<Instant>,
}

impl LiveSession {
    pub fn touch(&self) {
        *self.last_seen.lock().unwrap() = Instant::now();
    }

    pub fn idle_for(&self) -> Duration {
        self.last_seen.lock().unwrap().elapsed()
    }
}

struct Inner {
    engine: Arc<Engine>,
    opts: ServiceOptions,
    seekers: RwLock<BTreeMap<String, SeekerProfile>>,
    /// Closed sessions per seeker, loaded from disk on first use.
    archives: Mutex<HashMap<String, Vec<SessionTranscript>>>,
    /// Seeker id to the token of its open (or opening) session.
    occupied: Mutex<HashMap<String, String>>,
    sessions: Mutex<HashMap<String, Arc<LiveSession>>>,
}

/// Shared service state. Cheap to clone.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(engine: Arc<Engine>, seekers: Vec<SeekerProfile>, opts: ServiceOptions) -> Self {
        let seekers = seekers.into_iter().map(|s| (s.id.clone(), s)).collect();
        AppState(Arc::new(Inner {
            engine,
            opts,
            seekers: RwLock::new(seekers),
            archives: Mutex::new(HashMap::new()),
            occupied: Mutex::new(HashMap::new()),
            sessions: Mutex::new(HashMap::new()),
        }))
    }

    /// Builds the engine and loads the seeker directory named in the config.
    pub fn from_config(cfg: RuntimeConfig) -> Result<Self> {
        let opts = ServiceOptions::from_config(&cfg);
        let seekers = match &cfg.paths.seekers {
            Some(dir) => SeekerProfile::load_dir(dir)?,
            None => Vec::new(),
        };
        let engine = Arc::new(Engine::from_config(cfg)?);
        Ok(Self::new(engine, seekers, opts))
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.0.engine
    }

    pub fn options(&self) -> &ServiceOptions {
        &self.0.opts
    }

    pub fn trainer_mode(&self) -> bool {
        self.0.opts.trainer_mode
    }

    pub fn seekers(&self) -> Vec<SeekerProfile> {
        self.0.seekers.read().unwrap().values().cloned().collect()
    }

    pub fn seeker(&self, id: &str) -> Option<SeekerProfile> {
        self.0.seekers.read().unwrap().get(id).cloned()
    }

    pub fn add_seeker(&self, profile: SeekerProfile) -> ApiResult<()> {
        profile.validate()?;
        let mut seekers = self.0.seekers.write().unwrap();
        if seekers.contains_key(&profile.id) {
            return Err(ApiError::conflict(format!("seeker `{}` already exists", profile.id)));
        }
        seekers.insert(profile.id.clone(), profile);
        Ok(())
    }

    pub fn open_session_count(&self) -> usize {
        self.0.sessions.lock().unwrap().len()
    }

    pub fn archive_of(&self, seeker_id: &str) -> Result<Vec<SessionTranscript>> {
        let mut archives = self.0.archives.lock().unwrap();
        if let Some(a) = archives.get(seeker_id) {
            return Ok(a.clone());
        }
        let loaded = match &self.0.opts.archive {
            Some(root) => MemoryStore::load(root, seeker_id)?.archive().to_vec(),
            None => Vec::new(),
        };
        archives.insert(seeker_id.to_string(), loaded.clone());
        Ok(loaded)
    }

    pub(crate) fn live(&self, token: &str) -> ApiResult<Arc<LiveSession>> {
        let found = self.0.sessions.lock().unwrap().get(token).cloned();
        let Some(s) = found else {
            return Err(ApiError::not_found("unknown or expired session"));
        };
        if s.idle_for() >= self.0.opts.ttl {
            self.expire(&s);
            return Err(ApiError::not_found("unknown or expired session"));
        }
        Ok(s)
    }

    /// Opens the next session of `seeker_id` and returns its token.
    pub(crate) async fn open(&self, seeker_id: &str) -> ApiResult<Arc<LiveSession>> {
        let profile = self
            .seeker(seeker_id)
            .ok_or_else(|| ApiError::not_found(format!("unknown seeker `{seeker_id}`")))?;
        let token = uuid::Uuid::new_v4().simple().to_string();
        {
            let mut occupied = self.0.occupied.lock().unwrap();
            if occupied.contains_key(seeker_id) {
                return Err(ApiError::conflict(format!("seeker `{seeker_id}` already has an open session")));
            }
            occupied.insert(seeker_id.to_string(), token.clone());
        }
        let opened = async {
            let memory = MemoryStore::with_archive(seeker_id, self.archive_of(seeker_id)?)?;
            open_session(self.0.engine.clone(), &profile, memory).await
        }
        .await;
        let runtime = match opened {
            Ok(rt) => rt,
            Err(e) => {
                self.0.occupied.lock().unwrap().remove(seeker_id);
                return Err(e.into());
            }
        };
        let live = Arc::new(LiveSession {
            token: token.clone(),
            seeker_id: seeker_id.to_string(),
            session_id: runtime.session_id().to_string(),
            opened_at: Utc::now(),
            runtime: tokio::sync::Mutex::new(Some(runtime)),
            last_seen: Mutex::new(Instant::now()),
        });
        self.0.sessions.lock().unwrap().insert(token, live.clone());
        Ok(live)
    }

    /// Runs one round. Only one message per session may be in flight.
    pub(crate) async fn message(&self, token: &str, content: &str) -> ApiResult<Utterance> {
        if content.trim().is_empty() {
            return Err(ApiError::bad_request("message content is empty"));
        }
        let live = self.live(token)?;
        let Ok(mut guard) = live.runtime.try_lock() else {
            return Err(ApiError::conflict("a message for this session is already being processed"));
        };
        let rt = guard
            .as_mut()
            .ok_or_else(|| ApiError::not_found("unknown or expired session"))?;
        live.touch();
        let reply = rt.seeker_reply(content).await;
        live.touch();
        Ok(reply?)
    }

    /// Closes the session, archives the transcript and frees the seeker.
    pub async fn close(&self, token: &str, report: Option<String>) -> ApiResult<SessionTranscript> {
        let live = self.live(token)?;
        let Ok(mut guard) = live.runtime.try_lock() else {
            return Err(ApiError::conflict("a message for this session is already being processed"));
        };
        let rt = guard
            .take()
            .ok_or_else(|| ApiError::not_found("unknown or expired session"))?;
        self.finish(&live, rt, report).map_err(ApiError::from)
    }

    fn finish(&self, live: &LiveSession, rt: SessionRuntime, report: Option<String>) -> Result<SessionTranscript> {
        self.0.sessions.lock().unwrap().remove(&live.token);
        let result = rt.close(report);
        self.0.occupied.lock().unwrap().remove(&live.seeker_id);
        let (transcript, _) = result?;
        if let Some(root) = &self.0.opts.archive {
            persist(root, &transcript)?;
        }
        self.0
            .archives
            .lock()
            .unwrap()
            .entry(live.seeker_id.clone())
            .or_default()
            .push(transcript.clone());
        tracing::info!(session = %transcript.session_id(), "session archived");
        Ok(transcript)
    }

    /// Closes an idle session unless a round is running in it.
    fn expire(&self, live: &LiveSession) -> bool {
        let Ok(mut guard) = live.runtime.try_lock() else {
            return false;
        };
        let Some(rt) = guard.take() else {
            return false;
        };
        tracing::info!(session = %live.session_id, "session expired");
        if let Err(e) = self.finish(live, rt, None) {
            tracing::warn!(session = %live.session_id, error = %e, "could not archive expired session");
        }
        true
    }

    /// Closes every session idle past the TTL. Returns how many were closed.
    pub fn reap_expired(&self) -> usize {
        let ttl = self.0.opts.ttl;
        let idle: Vec<_> = self
            .0
            .sessions
            .lock()
            .unwrap()
            .values()
            .filter(|s| s.idle_for() >= ttl)
            .cloned()
            .collect();
        idle.iter().filter(|s| self.expire(s)).count()
    }

    /// Writes every open transcript that is not mid-round to the archive
    /// directory. Open snapshots carry no close time, so they are never
    /// loaded back as long-term memory.
    pub fn snapshot(&self) -> Result<usize> {
        let Some(root) = &self.0.opts.archive else {
            return Ok(0);
        };
        let open: Vec<_> = self.0.sessions.lock().unwrap().values().cloned().collect();
        let mut written = 0;
        for s in open {
            let Ok(guard) = s.runtime.try_lock() else {
                continue;
            };
            if let Some(rt) = guard.as_ref() {
                persist(root, rt.transcript())?;
                written += 1;
            }
        }
        Ok(written)
    }

    /// Closes all open sessions, e.g. on shutdown.
    pub async fn close_all(&self) -> Vec<Error> {
        let open: Vec<_> = self.0.sessions.lock().unwrap().values().cloned().collect();
        let mut errors = Vec::new();
        for s in open {
            let mut guard = s.runtime.lock().await;
            if let Some(rt) = guard.take() {
                if let Err(e) = self.finish(&s, rt, None) {
                    errors.push(e);
                }
            }
        }
        errors
    }
}
