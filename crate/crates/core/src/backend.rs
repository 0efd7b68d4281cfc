//! Chat backends. Every model-backed function of the engine (seeker
//! generation, emotion inference, chain generation, recognition, memory
//! gating, scale filling, summarizing and judging) goes through
//! [`ChatBackend`], so a fine-tuned model, a hosted API and the scripted
//! [`MockBackend`] are interchangeable.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::Assistant,
            content: content.into(),
        }
    }
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;

    async fn complete(&self, messages: &[ChatMessage]) -> Result<String>;
}

#[async_trait]
pub trait EmbeddingBackend: Send + Sync {
    fn id(&self) -> &str;

    async fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>>;
}

/// The model-backed roles a runtime needs bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendRole {
    SeekerGenerator,
    EmotionInferencer,
    ChainGenerator,
    Recognizer,
    QuerierGate,
    ScaleFiller,
    Summarizer,
    Judge,
}

impl BackendRole {
    pub const ALL: [BackendRole; 8] = [
        BackendRole::SeekerGenerator,
        BackendRole::EmotionInferencer,
        BackendRole::ChainGenerator,
        BackendRole::Recognizer,
        BackendRole::QuerierGate,
        BackendRole::ScaleFiller,
        BackendRole::Summarizer,
        BackendRole::Judge,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BackendRole::SeekerGenerator => "seeker_generator",
            BackendRole::EmotionInferencer => "emotion_inferencer",
            BackendRole::ChainGenerator => "chain_generator",
            BackendRole::Recognizer => "recognizer",
            BackendRole::QuerierGate => "querier_gate",
            BackendRole::ScaleFiller => "scale_filler",
            BackendRole::Summarizer => "summarizer",
            BackendRole::Judge => "judge",
        }
    }
}

impl fmt::Display for BackendRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

// ---------------------------------------------------------------------------
// Mock

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    /// Case-insensitive substring looked up in the last user message.
    pub contains: String,
    pub reply: String,
}

/// Declarative script for [`MockBackend`].
///
/// Replies are taken from `responses` in order (cycling when `cycle` is set),
/// unless a rule matches first. A reply of `!fail` makes that call fail and
/// `{call}` inside a reply expands to the 1-based call number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockSpec {
    #[serde(default)]
    pub responses: Vec<String>,
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default = "default_true")]
    pub cycle: bool,
    /// Every call from this (0-based) call number on fails.
    #[serde(default)]
    pub fail_after: Option<usize>,
}

fn default_true() -> bool {
    true
}

impl Default for MockSpec {
    fn default() -> Self {
        MockSpec {
            responses: Vec::new(),
            rules: Vec::new(),
            cycle: true,
            fail_after: None,
        }
    }
}

pub const MOCK_FAIL: &str = "!fail";

#[derive(Debug, Default)]
struct MockState {
    calls: usize,
    scripted: usize,
    log: Vec<Vec<ChatMessage>>,
}

/// Deterministic in-memory backend. Records every request it receives.
#[derive(Debug)]
pub struct MockBackend {
    id: String,
    spec: MockSpec,
    state: Mutex<MockState>,
}

impl MockBackend {
    pub fn from_spec(id: impl Into<String>, spec: MockSpec) -> Self {
        MockBackend {
            id: id.into(),
            spec,
            state: Mutex::new(MockState::default()),
        }
    }

    /// Replies in order, then fails once the script runs out.
    pub fn scripted<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::from_spec(
            "mock",
            MockSpec {
                responses: responses.into_iter().map(Into::into).collect(),
                cycle: false,
                ..MockSpec::default()
            },
        )
    }

    /// Replies in order, starting over at the end.
    pub fn cycling<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::from_spec(
            "mock",
            MockSpec {
                responses: responses.into_iter().map(Into::into).collect(),
                ..MockSpec::default()
            },
        )
    }

    pub fn always(reply: impl Into<String>) -> Self {
        Self::cycling([reply.into()])
    }

    pub fn failing() -> Self {
        Self::from_spec(
            "mock",
            MockSpec {
                fail_after: Some(0),
                ..MockSpec::default()
            },
        )
    }

    pub fn with_rule(mut self, contains: impl Into<String>, reply: impl Into<String>) -> Self {
        self.spec.rules.push(MockRule {
            contains: contains.into(),
            reply: reply.into(),
        });
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn call_count(&self) -> usize {
        self.state.lock().expect("mock state").calls
    }

    pub fn calls(&self) -> Vec<Vec<ChatMessage>> {
        self.state.lock().expect("mock state").log.clone()
    }

    pub fn last_call(&self) -> Option<Vec<ChatMessage>> {
        self.state.lock().expect("mock state").log.last().cloned()
    }
}

#[async_trait]
impl ChatBackend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    async fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let mut st = self.state.lock().expect("mock state");
        let n = st.calls;
        st.calls += 1;
        st.log.push(messages.to_vec());

        if self.spec.fail_after.is_some_and(|k| n >= k) {
            return Err(Error::BackendUnavailable(format!("{} is down", self.id)));
        }

        let last_user = messages
            .iter()
            .rev()
            .find(|m| m.role == ChatRole::User)
            .map(|m| m.content.to_lowercase())
            .unwrap_or_default();
        let rule = self
            .spec
            .rules
            .iter()
            .find(|r| last_user.contains(&r.contains.to_lowercase()));
        let reply = match rule {
            Some(r) => r.reply.clone(),
            None => {
                let responses = &self.spec.responses;
                if responses.is_empty() {
                    return Err(Error::BackendUnavailable(format!("{} has no script", self.id)));
                }
                let k = st.scripted;
                st.scripted += 1;
                if k < responses.len() {
                    responses[k].clone()
                } else if self.spec.cycle {
                    responses[k % responses.len()].clone()
                } else {
                    return Err(Error::BackendUnavailable(format!(
                        "{} script exhausted",
                        self.id
                    )));
                }
            }
        };
        if reply == MOCK_FAIL {
            return Err(Error::BackendUnavailable(format!("{} scripted failure", self.id)));
        }
        Ok(reply.replace("{call}", &(n + 1).to_string()))
    }
}

/// Deterministic bag-of-words embedder: each lowercase token is hashed into
/// one of `dims` buckets. Useful offline and in tests.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dims: usize,
}

impl HashingEmbedder {
    pub fn new(dims: usize) -> Self {
        HashingEmbedder { dims: dims.max(1) }
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[async_trait]
impl EmbeddingBackend for HashingEmbedder {
    fn id(&self) -> &str {
        "hashing"
    }

    async fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        Ok(texts
            .iter()
            .map(|t| {
                let mut v = vec![0f32; self.dims];
                for tok in crate::text::tokens(t) {
                    v[(fnv1a(&tok) % self.dims as u64) as usize] += 1.0;
                }
                v
            })
            .collect())
    }
}

// ---------------------------------------------------------------------------
// HTTP

/// Client for any endpoint speaking the common chat-completion wire format
/// (`POST {base_url}/chat/completions`).
#[derive(Debug, Clone)]
pub struct HttpChatBackend {
    id: String,
    base_url: String,
    model: String,
    api_key: Option<String>,
    temperature: Option<f32>,
    client: reqwest::Client,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f32>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: ChatMessage,
}

impl HttpChatBackend {
    pub fn new(
        base_url: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        temperature: Option<f32>,
        timeout: Duration,
    ) -> Result<Self> {
        let base_url = base_url.into().trim_end_matches('/').to_string();
        let model = model.into();
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(HttpChatBackend {
            id: format!("{model}@{base_url}"),
            base_url,
            model,
            api_key,
            temperature,
            client,
        })
    }
}

#[async_trait]
impl ChatBackend for HttpChatBackend {
    fn id(&self) -> &str {
        &self.id
    }

    async fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let body = CompletionRequest {
            model: &self.model,
            messages,
            temperature: self.temperature,
        };
        let mut req = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| Error::BackendUnavailable(format!("{}: {e}", self.id)))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::BackendUnavailable(format!("{}: HTTP {status}", self.id)));
        }
        let parsed: CompletionResponse = resp
            .json()
            .await
            .map_err(|e| Error::BackendUnavailable(format!("{}: bad response: {e}", self.id)))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| Error::BackendUnavailable(format!("{}: empty choices", self.id)))
    }
}

/// Client for `POST {base_url}/embeddings`.
#[derive(Debug, Clone)]
pub struct HttpEmbeddingBackend {
    id: String,
    base_url: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::Client,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f32>,
}

impl HttpEmbeddingBackend {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Result<Self> {
        let base_url = base_url.into().trim_end_matches('/').to_string();
        let model = model.into();
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(HttpEmbeddingBackend {
            id: format!("{model}@{base_url}"),
            base_url,
            model,
            api_key,
            client,
        })
    }
}

#[async_trait]
impl EmbeddingBackend for HttpEmbeddingBackend {
    fn id(&self) -> &str {
        &self.id
    }

    async fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut req = self
            .client
            .post(format!("{}/embeddings", self.base_url))
            .json(&EmbeddingRequest {
                model: &self.model,
                input: texts,
            });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| Error::BackendUnavailable(format!("{}: {e}", self.id)))?;
        if !resp.status().is_success() {
            return Err(Error::BackendUnavailable(format!(
                "{}: HTTP {}",
                self.id,
                resp.status()
            )));
        }
        let mut parsed: EmbeddingResponse = resp
            .json()
            .await
            .map_err(|e| Error::BackendUnavailable(format!("{}: bad response: {e}", self.id)))?;
        if parsed.data.len() != texts.len() {
            return Err(Error::BackendUnavailable(format!(
                "{}: expected {} embeddings, got {}",
                self.id,
                texts.len(),
                parsed.data.len()
            )));
        }
        parsed.data.sort_by_key(|d| d.index.unwrap_or(0));
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}

// ---------------------------------------------------------------------------
// Retry, timeout and in-flight cap

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub timeout: Duration,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 1,
            timeout: Duration::from_secs(30),
            backoff: Duration::from_millis(250),
        }
    }
}

/// Wraps a backend with a per-call timeout, exponential-backoff retries and
/// an optional shared in-flight request cap.
pub struct ManagedBackend {
    inner: Arc<dyn ChatBackend>,
    policy: RetryPolicy,
    limiter: Option<Arc<Semaphore>>,
}

impl ManagedBackend {
    pub fn new(inner: Arc<dyn ChatBackend>, policy: RetryPolicy, limiter: Option<Arc<Semaphore>>) -> Self {
        ManagedBackend {
            inner,
            policy,
            limiter,
        }
    }

    async fn attempt(&self, messages: &[ChatMessage]) -> Result<String> {
        let _permit = match &self.limiter {
            Some(sem) => Some(
                sem.acquire()
                    .await
                    .map_err(|_| Error::BackendUnavailable("request limiter closed".into()))?,
            ),
            None => None,
        };
        match tokio::time::timeout(self.policy.timeout, self.inner.complete(messages)).await {
            Ok(r) => r,
            Err(_) => Err(Error::BackendUnavailable(format!(
                "{}: timed out after {:?}",
                self.inner.id(),
                self.policy.timeout
            ))),
        }
    }
}

#[async_trait]
impl ChatBackend for ManagedBackend {
    fn id(&self) -> &str {
        self.inner.id()
    }

    async fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let mut attempt = 0;
        loop {
            match self.attempt(messages).await {
                Ok(text) => return Ok(text),
                Err(Error::BackendUnavailable(msg)) if attempt < self.policy.max_retries => {
                    let delay = self.policy.backoff * 2u32.saturating_pow(attempt);
                    tracing::debug!(backend = self.inner.id(), %msg, ?delay, "retrying");
                    tokio::time::sleep(delay).await;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    /// Chat-completion compatible HTTP endpoint.
    Openai {
        base_url: String,
        model: String,
        /// Name of the environment variable holding the bearer token.
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default)]
        temperature: Option<f32>,
    },
    Mock(MockSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    #[serde(flatten)]
    pub kind: BackendKind,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_timeout_secs() -> f64 {
    30.0
}

fn default_max_retries() -> u32 {
    1
}

fn default_backoff_ms() -> u64 {
    250
}

impl BackendSpec {
    pub fn mock(spec: MockSpec) -> Self {
        BackendSpec {
            kind: BackendKind::Mock(spec),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            backoff_ms: 0,
        }
    }

    pub fn policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            timeout: Duration::from_secs_f64(self.timeout_secs.max(0.001)),
            backoff: Duration::from_millis(self.backoff_ms),
        }
    }

    /// Instantiates the raw backend (without retry wrapping).
    pub fn build(&self, id: &str) -> Result<Arc<dyn ChatBackend>> {
        match &self.kind {
            BackendKind::Mock(spec) => Ok(Arc::new(MockBackend::from_spec(format!("mock:{id}"), spec.clone()))),
            BackendKind::Openai {
                base_url,
                model,
                api_key_env,
                temperature,
            } => {
                let api_key = match api_key_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        Error::Config(format!("backend `{id}`: environment variable {var} is not set"))
                    })?),
                    None => None,
                };
                Ok(Arc::new(HttpChatBackend::new(
                    base_url.clone(),
                    model.clone(),
                    api_key,
                    *temperature,
                    self.policy().timeout,
                )?))
            }
        }
    }

    pub fn build_managed(&self, id: &str, limiter: Option<Arc<Semaphore>>) -> Result<Arc<dyn ChatBackend>> {
        Ok(Arc::new(ManagedBackend::new(self.build(id)?, self.policy(), limiter)))
    }
}

/// One backend per role.
#[derive(Clone)]
pub struct BackendSet {
    bindings: BTreeMap<BackendRole, Arc<dyn ChatBackend>>,
}

impl fmt::Debug for BackendSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (role, b) in &self.bindings {
            m.entry(&role.as_str(), &b.id());
        }
        m.finish()
    }
}

impl BackendSet {
    /// Binds every role; fails if any role is missing.
    pub fn new(bindings: BTreeMap<BackendRole, Arc<dyn ChatBackend>>) -> Result<Self> {
        for role in BackendRole::ALL {
            if !bindings.contains_key(&role) {
                return Err(Error::Config(format!("missing backend binding for role `{role}`")));
            }
        }
        Ok(BackendSet { bindings })
    }

    /// Binds the same backend to every role.
    pub fn uniform(backend: Arc<dyn ChatBackend>) -> Self {
        BackendSet {
            bindings: BackendRole::ALL
                .iter()
                .map(|r| (*r, backend.clone()))
                .collect(),
        }
    }

    pub fn from_specs(specs: &BTreeMap<BackendRole, BackendSpec>, limiter: Option<Arc<Semaphore>>) -> Result<Self> {
        let mut bindings = BTreeMap::new();
        for role in BackendRole::ALL {
            let spec = specs
                .get(&role)
                .ok_or_else(|| Error::Config(format!("missing backend binding for role `{role}`")))?;
            bindings.insert(role, spec.build_managed(role.as_str(), limiter.clone())?);
        }
        Self::new(bindings)
    }

    pub fn with(mut self, role: BackendRole, backend: Arc<dyn ChatBackend>) -> Self {
        self.bindings.insert(role, backend);
        self
    }

    pub fn get(&self, role: BackendRole) -> &dyn ChatBackend {
        self.bindings[&role].as_ref()
    }

    pub fn ids(&self) -> BTreeMap<String, String> {
        self.bindings
            .iter()
            .map(|(r, b)| (r.as_str().to_string(), b.id().to_string()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn scripted_mock_runs_out() {
        let m = MockBackend::scripted(["a", "b"]);
        assert_eq!(m.complete(&[]).await.unwrap(), "a");
        assert_eq!(m.complete(&[]).await.unwrap(), "b");
        assert!(m.complete(&[]).await.is_err());
        assert_eq!(m.call_count(), 3);
    }

    #[tokio::test]
    async fn rules_take_precedence_and_do_not_consume_script() {
        let m = MockBackend::cycling(["no"]).with_rule("LAST SESSION", "yes");
        let ask = |t: &str| vec![ChatMessage::system("sys"), ChatMessage::user(t)];
        assert_eq!(m.complete(&ask("hello")).await.unwrap(), "no");
        assert_eq!(m.complete(&ask("about our last session")).await.unwrap(), "yes");
        assert_eq!(m.complete(&ask("hi")).await.unwrap(), "no");
    }

    #[tokio::test]
    async fn call_placeholder_and_scripted_failure() {
        let m = MockBackend::scripted(["reply {call}", MOCK_FAIL, "reply {call}"]);
        assert_eq!(m.complete(&[]).await.unwrap(), "reply 1");
        assert!(m.complete(&[]).await.is_err());
        assert_eq!(m.complete(&[]).await.unwrap(), "reply 3");
    }

    #[tokio::test]
    async fn managed_backend_retries_once() {
        let raw = Arc::new(MockBackend::scripted([MOCK_FAIL, "ok"]));
        let policy = RetryPolicy {
            backoff: Duration::ZERO,
            ..RetryPolicy::default()
        };
        let b = ManagedBackend::new(raw.clone(), policy, None);
        assert_eq!(b.complete(&[]).await.unwrap(), "ok");
        assert_eq!(raw.call_count(), 2);

        let raw = Arc::new(MockBackend::failing());
        let b = ManagedBackend::new(raw.clone(), policy, None);
        assert!(matches!(b.complete(&[]).await, Err(Error::BackendUnavailable(_))));
        assert_eq!(raw.call_count(), 2);
    }

    struct Slow;

    #[async_trait]
    impl ChatBackend for Slow {
        fn id(&self) -> &str {
            "slow"
        }
        async fn complete(&self, _: &[ChatMessage]) -> Result<String> {
            tokio::time::sleep(Duration::from_secs(5)).await;
            Ok("late".into())
        }
    }

    #[tokio::test]
    async fn managed_backend_times_out() {
        let policy = RetryPolicy {
            max_retries: 0,
            timeout: Duration::from_millis(20),
            backoff: Duration::ZERO,
        };
        let b = ManagedBackend::new(Arc::new(Slow), policy, None);
        assert!(matches!(b.complete(&[]).await, Err(Error::BackendUnavailable(_))));
    }

    #[test]
    fn backend_spec_toml() {
        let doc = r#"
kind = "mock"
responses = ["a", "b"]
max_retries = 2

"#;
        let spec: BackendSpec = toml::from_str(doc).unwrap();
        assert_eq!(spec.max_retries, 2);
        assert!(matches!(&spec.kind, BackendKind::Mock(m) if m.responses.len() == 2 && m.cycle));

        let doc = r#"
kind = "openai"
base_url = "http://localhost:9/v1"
model = "m"
timeout_secs = 5
"#;
        let spec: BackendSpec = toml::from_str(doc).unwrap();
        assert_eq!(spec.policy().timeout, Duration::from_secs(5));
    }

    #[test]
    fn backend_set_requires_every_role() {
        let mut specs = BTreeMap::new();
        for role in BackendRole::ALL.iter().skip(1) {
            specs.insert(*role, BackendSpec::mock(MockSpec::default()));
        }
        let err = BackendSet::from_specs(&specs, None).unwrap_err();
        assert!(err.to_string().contains("seeker_generator"));
    }
}
