//! Runtime configuration file.
//!
//! ```toml
//! seed = 7
//! clock = "logical"
//!
//! [ablation]
//! dynamic_evolution = true
//! long_term_memory = true
//!
//! [paths]
//! seekers = "seekers"
//! events = "events.jsonl"
//! archive = "archive"
//!
//! [backends.seeker_generator]
//! kind = "openai"
//! base_url = "http://localhost:8000/v1"
//! model = "qwen2.5-7b-instruct"
//! api_key_env = "SEEKER_API_KEY"
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendRole, BackendSpec};
use crate::emotion::PerturbationPolicy;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    #[default]
    System,
    /// Fixed start, one second per reading. For reproducible transcripts.
    Logical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub dynamic_evolution: bool,
    pub long_term_memory: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            dynamic_evolution: true,
            long_term_memory: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budgets {
    pub round_timeout_secs: f64,
    pub max_in_flight: usize,
    pub retrieval_k: usize,
    pub supplement_chars: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            round_timeout_secs: 60.0,
            max_in_flight: 16,
            retrieval_k: 3,
            supplement_chars: 1200,
        }
    }
}

impl Budgets {
    pub fn round_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.round_timeout_secs.max(0.0))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub seekers: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub archive: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub scales: Option<PathBuf>,
    pub templates: Option<PathBuf>,
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.seekers,
            &mut self.events,
            &mut self.archive,
            &mut self.taxonomy,
            &mut self.scales,
            &mut self.templates,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerConfig {
    #[default]
    Lexical,
    Embedding {
        base_url: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_embed_timeout")]
        timeout_secs: f64,
    },
}

fn default_embed_timeout() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    pub ttl_secs: u64,
    pub trainer_mode: bool,
    pub snapshot_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".into(),
            ttl_secs: 30 * 60,
            trainer_mode: false,
            snapshot_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuntimeConfig {
    pub seed: u64,
    pub clock: ClockKind,
    pub ablation: AblationFlags,
    pub budgets: Budgets,
    pub perturbation: PerturbationPolicy,
    /// Session-start emotion when neither a prior report nor the profile names one.
    pub initial_emotion: String,
    /// Counselor text that ends a simulated session.
    pub end_token: String,
    pub paths: Paths,
    pub retrieval: ScorerConfig,
    pub backends: BTreeMap<BackendRole, BackendSpec>,
    pub counselors: BTreeMap<String, BackendSpec>,
    pub service: ServiceConfig,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            seed: 0,
            clock: ClockKind::default(),
            ablation: AblationFlags::default(),
            budgets: Budgets::default(),
            perturbation: PerturbationPolicy::default(),
            initial_emotion: "neutral".into(),
            end_token: "[END]".into(),
            paths: Paths::default(),
            retrieval: ScorerConfig::default(),
            backends: BTreeMap::new(),
            counselors: BTreeMap::new(),
            service: ServiceConfig::default(),
        }
    }
}

impl RuntimeConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RuntimeConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(base) = path.parent() {
            cfg.paths.resolve(base);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.perturbation.validate()?;
        if self.budgets.retrieval_k == 0 {
            return Err(Error::Config("budgets.retrieval_k must be at least 1".into()));
        }
        if self.budgets.max_in_flight == 0 {
            return Err(Error::Config("budgets.max_in_flight must be at least 1".into()));
        }
        if self.end_token.trim().is_empty() {
            return Err(Error::Config("end_token must not be empty".into()));
        }
        Ok(())
    }
}
