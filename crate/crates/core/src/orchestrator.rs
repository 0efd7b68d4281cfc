//! Session lifecycle and the per-round pipeline.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::backend::{BackendRole, BackendSet, ChatBackend, ChatMessage, HttpEmbeddingBackend};
use crate::complaint::{generate_chain, step_elicitation, ComplaintChain};
use crate::config::{AblationFlags, ClockKind, RuntimeConfig, ScorerConfig};
use crate::domain::{
    Annotations, Clock, LogicalClock, SeekerConfiguration, SeekerProfile, SessionTranscript, Speaker, SystemClock,
    Utterance,
};
use crate::emotion::{infer_emotion, perturb, EmotionLabel, EmotionTaxonomy};
use crate::error::{Error, Result, StageExt};
use crate::memory::{
    administer_scales, load_event_corpus, query_long_term, sample_event, summarize_short_term, EmbeddingScorer,
    EventRecord, LexicalScorer, MemoryStore, RetrievalScorer, ScaleDefinition, ShortTermMemory,
};
use crate::prompt::{render_reminder, render_seeker_system_prompt, TemplateSet};
use crate::text;

/// Kick-off line shown to a counselor model before anyone has spoken.
const COUNSELOR_KICKOFF: &str = "The client has just arrived for the session. Please begin.";

/// Everything sessions share: configuration, loaded assets and backends.
pub struct Engine {
    config: RuntimeConfig,
    backends: BackendSet,
    taxonomy: EmotionTaxonomy,
    templates: TemplateSet,
    scales: Vec<ScaleDefinition>,
    events: Vec<EventRecord>,
    scorer: Arc<dyn RetrievalScorer>,
    clock: Arc<dyn Clock>,
    limiter: Arc<Semaphore>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("backends", &self.backends)
            .field("scorer", &self.scorer.id())
            .finish_non_exhaustive()
    }
}

/// Builds an [`Engine`], loading anything not supplied from the paths in the
/// configuration.
pub struct EngineBuilder {
    config: RuntimeConfig,
    backends: Option<BackendSet>,
    events: Option<Vec<EventRecord>>,
    clock: Option<Arc<dyn Clock>>,
    scorer: Option<Arc<dyn RetrievalScorer>>,
}

impl EngineBuilder {
    pub fn backends(mut self, backends: BackendSet) -> Self {
        self.backends = Some(backends);
        self
    }

    pub fn events(mut self, events: Vec<EventRecord>) -> Self {
        self.events = Some(events);
        self
    }

    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = Some(clock);
        self
    }

    pub fn scorer(mut self, scorer: Arc<dyn RetrievalScorer>) -> Self {
        self.scorer = Some(scorer);
        self
    }

    pub fn build(self) -> Result<Engine> {
        let config = self.config;
        config.validate()?;
        let limiter = Arc::new(Semaphore::new(config.budgets.max_in_flight));
        let backends = match self.backends {
            Some(b) => b,
            None => BackendSet::from_specs(&config.backends, Some(limiter.clone()))?,
        };
        let taxonomy = match &config.paths.taxonomy {
            Some(p) => EmotionTaxonomy::load(p)?,
            None => EmotionTaxonomy::go_emotions(),
        };
        let initial = EmotionLabel::new(config.initial_emotion.to_lowercase());
        if !taxonomy.contains(&initial) {
            return Err(Error::Config(format!(
                "initial_emotion `{}` is not in the taxonomy",
                config.initial_emotion
            )));
        }
        let templates = match &config.paths.templates {
            Some(p) => TemplateSet::load_overrides(p)?,
            None => TemplateSet::default(),
        };
        let scales = match &config.paths.scales {
            Some(p) => ScaleDefinition::load(p)?,
            None => ScaleDefinition::placeholders(),
        };
        let events = match (self.events, &config.paths.events) {
            (Some(e), _) => e,
            (None, Some(p)) => load_event_corpus(p)?,
            (None, None) => Vec::new(),
        };
        let scorer: Arc<dyn RetrievalScorer> = match (self.scorer, &config.retrieval) {
            (Some(s), _) => s,
            (None, ScorerConfig::Lexical) => Arc::new(LexicalScorer),
            (
                None,
                ScorerConfig::Embedding {
                    base_url,
                    model,
                    api_key_env,
                    timeout_secs,
                },
            ) => {
                let key = match api_key_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        Error::Config(format!("retrieval: environment variable {var} is not set"))
                    })?),
                    None => None,
                };
                let backend = HttpEmbeddingBackend::new(
                    base_url.clone(),
                    model.clone(),
                    key,
                    std::time::Duration::from_secs_f64(*timeout_secs),
                )?;
                Arc::new(EmbeddingScorer::new(Arc::new(backend)))
            }
        };
        let clock: Arc<dyn Clock> = match (self.clock, config.clock) {
            (Some(c), _) => c,
            (None, ClockKind::System) => Arc::new(SystemClock),
            (None, ClockKind::Logical) => Arc::new(LogicalClock::default()),
        };
        Ok(Engine {
            config,
            backends,
            taxonomy,
            templates,
            scales,
            events,
            scorer,
            clock,
            limiter,
        })
    }
}

impl Engine {
    pub fn builder(config: RuntimeConfig) -> EngineBuilder {
        EngineBuilder {
            config,
            backends: None,
            events: None,
            clock: None,
            scorer: None,
        }
    }

    pub fn from_config(config: RuntimeConfig) -> Result<Self> {
        Self::builder(config).build()
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.config
    }

    pub fn backends(&self) -> &BackendSet {
        &self.backends
    }

    pub fn taxonomy(&self) -> &EmotionTaxonomy {
        &self.taxonomy
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn scales(&self) -> &[ScaleDefinition] {
        &self.scales
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn scorer(&self) -> &dyn RetrievalScorer {
        self.scorer.as_ref()
    }

    pub fn clock(&self) -> &dyn Clock {
        self.clock.as_ref()
    }

    /// Counselor backend by name, with the same retry and in-flight limits as
    /// the seeker's own backends.
    pub fn counselor(&self, name: &str) -> Result<Arc<dyn ChatBackend>> {
        let spec = self
            .config
            .counselors
            .get(name)
            .ok_or_else(|| Error::Config(format!("no counselor named `{name}`")))?;
        spec.build_managed(&format!("counselor:{name}"), Some(self.limiter.clone()))
    }
}

/// Stable seed for one purpose within one session.
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |b: u8| {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    base.to_le_bytes().into_iter().for_each(&mut eat);
    for p in parts {
        eat(0xff);
        p.bytes().for_each(&mut eat);
    }
    h
}

/// Hidden per-session state, for trainers and tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebugState {
    pub session_id: String,
    pub emotion: EmotionLabel,
    pub complaint: String,
    pub stage: usize,
    pub stages: Vec<String>,
    pub status: String,
    pub situation: String,
    pub event_id: Option<String>,
    pub dynamic_evolution: bool,
    pub long_term_memory: bool,
}

/// One open session of one seeker.
pub struct SessionRuntime {
    engine: Arc<Engine>,
    seeker_id: String,
    cfg: SeekerConfiguration,
    chain: ComplaintChain,
    memory: MemoryStore,
    flags: AblationFlags,
    system_prompt: String,
    rng: ChaCha8Rng,
    /// Counselor message already appended whose reply has not been produced.
    pending: Option<String>,
}

impl std::fmt::Debug for SessionRuntime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionRuntime")
            .field("seeker_id", &self.seeker_id)
            .field("session_id", &self.session_id())
            .field("flags", &self.flags)
            .finish_non_exhaustive()
    }
}

/// Opens a session with the ablation flags from the engine configuration.
pub async fn open_session(engine: Arc<Engine>, profile: &SeekerProfile, memory: MemoryStore) -> Result<SessionRuntime> {
    let flags = engine.config.ablation;
    open_session_with_flags(engine, profile, memory, flags).await
}

/// Runs the session-start duties: scales, event, summaries, initial
/// emotion, complaint chain and system prompt.
pub async fn open_session_with_flags(
    engine: Arc<Engine>,
    profile: &SeekerProfile,
    mut memory: MemoryStore,
    flags: AblationFlags,
) -> Result<SessionRuntime> {
    profile.validate()?;
    if memory.seeker_id() != profile.id {
        return Err(Error::InvalidState(format!(
            "memory belongs to seeker {}, not {}",
            memory.seeker_id(),
            profile.id
        )));
    }
    if memory.realtime().is_some() {
        return Err(Error::SessionAlreadyOpen);
    }
    let e = engine.as_ref();
    let session_id = format!("{}-s{:03}", profile.id, memory.next_session_number());
    let mut cfg = SeekerConfiguration::new(profile.profile.clone()).with_complaint(profile.complaint.clone());
    if !profile.style_constraints.is_empty() {
        cfg = cfg.with_style_constraints(profile.style_constraints.clone());
    }

    let scales = administer_scales(
        &cfg,
        &e.scales,
        &session_id,
        &e.templates,
        e.backends.get(BackendRole::ScaleFiller),
        e.clock(),
    )
    .await
    .stage("scales")?;

    let event_seed = derive_seed(e.config.seed, &[&session_id, "event"]);
    let event = sample_event(&profile.profile, &e.events, event_seed)
        .stage("event")?
        .clone();

    let prior_scales = memory
        .last_archived()
        .map(|s| s.meta.scale_records.clone())
        .unwrap_or_default();
    let (status, situation) = summarize_short_term(
        &cfg,
        &scales,
        &prior_scales,
        &event,
        &e.templates,
        e.backends.get(BackendRole::Summarizer),
    )
    .await
    .stage("summary")?;
    cfg.set_status(status.clone());
    cfg.set_situation(situation.clone());

    let emotion = initial_emotion(e, profile, &memory).stage("emotion")?;
    cfg.set_emotion(emotion);

    let chain = generate_chain(
        &profile.id,
        &cfg,
        &event,
        &e.templates,
        e.backends.get(BackendRole::ChainGenerator),
    )
    .await
    .stage("chain")?;
    cfg.set_complaint(chain.current().to_string());

    let system_prompt = render_seeker_system_prompt(&e.templates, &cfg).stage("system_prompt")?;

    let mut transcript = SessionTranscript::new(session_id.clone(), profile.id.clone(), e.clock.now());
    transcript.meta.scale_records = scales.clone();
    transcript.meta.template_id = Some(system_prompt.template_id.clone());
    transcript.meta.chain = Some(chain.clone());
    memory.open(transcript)?;
    memory.set_shortterm(ShortTermMemory {
        scale_records: scales,
        event,
        status_summary: status,
        situation_summary: situation,
    });

    let rng_seed = derive_seed(e.config.perturbation.rng_seed.unwrap_or(e.config.seed), &[&session_id, "perturb"]);
    tracing::debug!(%session_id, ?flags, "session opened");
    Ok(SessionRuntime {
        seeker_id: profile.id.clone(),
        cfg,
        chain,
        memory,
        flags,
        system_prompt: system_prompt.rendered,
        rng: ChaCha8Rng::seed_from_u64(rng_seed),
        pending: None,
        engine,
    })
}

/// Prior-session report first, then the profile, then the configured default.
fn initial_emotion(engine: &Engine, profile: &SeekerProfile, memory: &MemoryStore) -> Result<EmotionLabel> {
    let tax = &engine.taxonomy;
    if let Some(report) = memory.last_archived().and_then(|s| s.meta.report.as_deref()) {
        let found = text::tokens(report)
            .into_iter()
            .map(EmotionLabel::new)
            .find(|l| tax.contains(l));
        if let Some(label) = found {
            return Ok(label);
        }
    }
    let label = match &profile.initial_emotion {
        Some(l) => EmotionLabel::new(l.as_str().to_lowercase()),
        None => EmotionLabel::new(engine.config.initial_emotion.to_lowercase()),
    };
    if tax.contains(&label) {
        Ok(label)
    } else {
        Err(Error::UnknownEmotion(label.to_string()))
    }
}

struct RoundOutput {
    reply: String,
    emotion: EmotionLabel,
    reminder: String,
    supplemented: bool,
}

impl SessionRuntime {
    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    pub fn seeker_id(&self) -> &str {
        &self.seeker_id
    }

    pub fn session_id(&self) -> &str {
        self.transcript().session_id()
    }

    pub fn cfg(&self) -> &SeekerConfiguration {
        &self.cfg
    }

    pub fn chain(&self) -> &ComplaintChain {
        &self.chain
    }

    pub fn memory(&self) -> &MemoryStore {
        &self.memory
    }

    pub fn flags(&self) -> AblationFlags {
        self.flags
    }

    pub fn system_prompt(&self) -> &str {
        &self.system_prompt
    }

    pub fn transcript(&self) -> &SessionTranscript {
        self.memory.realtime().expect("runtime always has an open session")
    }

    fn transcript_mut(&mut self) -> &mut SessionTranscript {
        self.memory.realtime_mut().expect("runtime always has an open session")
    }

    /// Whether a counselor message is waiting for its reply after a failed round.
    pub fn pending(&self) -> Option<&str> {
        self.pending.as_deref()
    }

    pub fn debug_state(&self) -> DebugState {
        DebugState {
            session_id: self.session_id().to_string(),
            emotion: self.cfg.emotion().clone(),
            complaint: self.cfg.complaint().to_string(),
            stage: self.chain.cursor(),
            stages: self.chain.stages().to_vec(),
            status: self.cfg.status().to_string(),
            situation: self.cfg.situation().to_string(),
            event_id: self.memory.shortterm().map(|s| s.event.event_id.clone()),
            dynamic_evolution: self.flags.dynamic_evolution,
            long_term_memory: self.flags.long_term_memory,
        }
    }

    /// Messages for the seeker generator: system prompt, the conversation so
    /// far, then the reminder as the last system message.
    fn generator_context(&self, reminder: &str) -> Vec<ChatMessage> {
        let mut messages = vec![ChatMessage::system(self.system_prompt.clone())];
        for u in self.transcript().dialogue() {
            messages.push(match u.speaker {
                Speaker::Counselor => ChatMessage::user(u.text.clone()),
                _ => ChatMessage::assistant(u.text.clone()),
            });
        }
        messages.push(ChatMessage::system(reminder.to_string()));
        messages
    }

    /// Produces the seeker's reply to a counselor message.
    ///
    /// If the round fails the counselor message stays in the transcript and
    /// the seeker's state is unchanged; calling again with the same message
    /// retries the round.
    pub async fn seeker_reply(&mut self, counselor_msg: &str) -> Result<Utterance> {
        let counselor_msg = counselor_msg.trim();
        if counselor_msg.is_empty() {
            return Err(Error::InvalidState("counselor message is empty".into()));
        }
        match self.pending.as_deref() {
            Some(p) if p == counselor_msg => {}
            Some(p) => {
                return Err(Error::InvalidState(format!(
                    "a reply to {p:?} is still pending; resend that message"
                )))
            }
            None => {
                self.transcript_mut()
                    .push(Speaker::Counselor, counselor_msg, Annotations::default())?;
                self.pending = Some(counselor_msg.to_string());
            }
        }

        let started = Instant::now();
        let budget = self.engine.config.budgets.round_timeout();
        let rng_before = self.rng.clone();
        let out = match tokio::time::timeout(budget, self.run_round(counselor_msg)).await {
            Ok(Ok(out)) => out,
            Ok(Err(e)) => {
                self.rng = rng_before;
                return Err(e);
            }
            Err(_) => {
                self.rng = rng_before;
                return Err(Error::BackendUnavailable(format!(
                    "round exceeded its {:.1}s budget",
                    budget.as_secs_f64()
                )));
            }
        };

        let annotations = Annotations {
            emotion: Some(out.emotion.clone()),
            complaint_stage: Some(self.chain.cursor()),
            retrieval_supplement: out.supplemented,
            reminder: Some(out.reminder),
        };
        let utterance = self
            .transcript_mut()
            .push(Speaker::Seeker, out.reply.clone(), annotations)?
            .clone();
        self.pending = None;
        self.cfg.set_emotion(out.emotion);

        if self.flags.dynamic_evolution {
            let round_text = format!(
                "{}: {}\n{}: {}",
                Speaker::Counselor.display_name(),
                counselor_msg,
                Speaker::Seeker.display_name(),
                out.reply
            );
            let remaining = budget.saturating_sub(started.elapsed());
            let engine = self.engine.clone();
            let recognizer = engine.backends.get(BackendRole::Recognizer);
            let step = step_elicitation(&mut self.chain, &round_text, &engine.templates, recognizer);
            match tokio::time::timeout(remaining, step).await {
                Ok(r) => {
                    r.stage("elicitation")?;
                }
                Err(_) => tracing::warn!("recognizer ran past the round budget, treating as not recognized"),
            }
            self.cfg.set_complaint(self.chain.current().to_string());
            let chain = self.chain.clone();
            self.transcript_mut().meta.chain = Some(chain);
        }
        Ok(utterance)
    }

    async fn run_round(&mut self, counselor_msg: &str) -> Result<RoundOutput> {
        let engine = self.engine.clone();
        let e = engine.as_ref();

        let supplement = if self.flags.long_term_memory {
            query_long_term(
                counselor_msg,
                &self.memory,
                e.backends.get(BackendRole::QuerierGate),
                e.scorer(),
                &e.templates,
                e.config.budgets.retrieval_k,
                e.config.budgets.supplement_chars,
            )
            .await
            .stage("retrieval")?
        } else {
            None
        };

        let emotion = if self.flags.dynamic_evolution {
            let base = infer_emotion(
                &self.cfg,
                self.transcript(),
                &e.taxonomy,
                &e.templates,
                e.backends.get(BackendRole::EmotionInferencer),
            )
            .await
            .stage("emotion")?;
            perturb(&base, &e.taxonomy, &e.config.perturbation, &mut self.rng).stage("emotion")?
        } else {
            self.cfg.emotion().clone()
        };

        let reminder = render_reminder(
            &e.templates,
            &e.taxonomy,
            &emotion,
            self.chain.current(),
            supplement.as_ref().map(|s| s.text.as_str()),
        )
        .stage("reminder")?;

        let context = self.generator_context(&reminder);
        let reply = e
            .backends
            .get(BackendRole::SeekerGenerator)
            .complete(&context)
            .await
            .stage("generation")?;
        let reply = reply.trim().to_string();
        if reply.is_empty() {
            return Err(Error::BackendUnavailable("seeker generator returned an empty reply".into()).in_stage("generation"));
        }
        Ok(RoundOutput {
            reply,
            emotion,
            reminder,
            supplemented: supplement.is_some(),
        })
    }

    /// Closes the session and returns the archived transcript together with
    /// the seeker's memory, ready for the next session.
    pub fn close(mut self, report: Option<String>) -> Result<(SessionTranscript, MemoryStore)> {
        if let Some(r) = report.filter(|r| !r.trim().is_empty()) {
            self.transcript_mut().meta.report = Some(r);
        }
        let closed = self.memory.close_session(self.engine.clock())?.clone();
        Ok((closed, self.memory))
    }

    /// Marks the open transcript as cut short.
    pub fn mark_incomplete(&mut self) {
        self.transcript_mut().meta.incomplete = true;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopRule {
    MaxRoundsOnly,
    /// The counselor ends the session by including this token.
    EndToken(String),
}

impl StopRule {
    /// Returns the counselor text with the token removed if the rule fires.
    fn check(&self, text: &str) -> Option<String> {
        match self {
            StopRule::MaxRoundsOnly => None,
            StopRule::EndToken(t) if text.contains(t.as_str()) => Some(text.replace(t.as_str(), "").trim().to_string()),
            StopRule::EndToken(_) => None,
        }
    }
}

#[derive(Debug)]
pub struct SimulationOutcome {
    pub transcript: SessionTranscript,
    pub memory: MemoryStore,
    pub rounds: usize,
    pub complete: bool,
    pub failure: Option<String>,
}

fn counselor_context(engine: &Engine, transcript: &SessionTranscript) -> Vec<ChatMessage> {
    let mut messages = vec![ChatMessage::system(engine.templates.counselor_system.render_with(&Default::default())
        .map(|a| a.rendered)
        .unwrap_or_default())];
    let mut any = false;
    for u in transcript.dialogue() {
        any = true;
        messages.push(match u.speaker {
            Speaker::Counselor => ChatMessage::assistant(u.text.clone()),
            _ => ChatMessage::user(u.text.clone()),
        });
    }
    if !any {
        messages.push(ChatMessage::user(COUNSELOR_KICKOFF));
    }
    messages
}

/// Lets a counselor backend talk to the seeker for up to `max_rounds` rounds,
/// then closes the session. Backend failures end the run early with the
/// transcript flagged incomplete.
pub async fn run_simulation(
    counselor: &dyn ChatBackend,
    mut runtime: SessionRuntime,
    max_rounds: usize,
    stop_rule: &StopRule,
) -> Result<SimulationOutcome> {
    if max_rounds == 0 {
        return Err(Error::Config("max_rounds must be at least 1".into()));
    }
    let mut rounds = 0;
    let mut failure = None;
    while rounds < max_rounds {
        let context = counselor_context(&runtime.engine, runtime.transcript());
        let msg = match counselor.complete(&context).await {
            Ok(m) => m.trim().to_string(),
            Err(e) => {
                failure = Some(e.in_stage("counselor").to_string());
                break;
            }
        };
        if let Some(rest) = stop_rule.check(&msg) {
            if !rest.is_empty() {
                runtime
                    .transcript_mut()
                    .push(Speaker::Counselor, rest, Annotations::default())?;
            }
            break;
        }
        if msg.is_empty() {
            failure = Some("counselor returned an empty message".into());
            break;
        }
        match runtime.seeker_reply(&msg).await {
            Ok(_) => rounds += 1,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }
    if let Some(f) = &failure {
        tracing::warn!(session = runtime.session_id(), failure = %f, "simulation ended early");
        runtime.mark_incomplete();
    }
    let (transcript, memory) = runtime.close(None)?;
    Ok(SimulationOutcome {
        complete: failure.is_none(),
        transcript,
        memory,
        rounds,
        failure,
    })
}

/// Writes a transcript under `<root>/<seeker_id>/`.
pub fn persist(root: &Path, transcript: &SessionTranscript) -> Result<()> {
    transcript.save(&root.join(transcript.seeker_id()))
}
