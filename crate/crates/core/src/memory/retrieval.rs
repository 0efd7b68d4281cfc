use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::backend::{ChatBackend, ChatMessage, EmbeddingBackend};
use crate::complaint::parse_yes_no;
use crate::domain::{SessionTranscript, Speaker};
use crate::error::{Error, Result};
use crate::prompt::TemplateSet;
use crate::text::{content_words, truncate_chars};

use super::store::MemoryStore;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChunkSource {
    Utterance { turn_index: usize, speaker: Speaker },
    Scale { scale_id: String },
}

/// One retrievable unit of long-term memory: an archived utterance or an
/// archived scale record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub session_id: String,
    pub source: ChunkSource,
    pub text: String,
}

impl Chunk {
    pub fn key(&self) -> String {
        match &self.source {
            ChunkSource::Utterance { turn_index, .. } => format!("{}#u{turn_index}", self.session_id),
            ChunkSource::Scale { scale_id } => format!("{}#scale:{scale_id}", self.session_id),
        }
    }

    fn render(&self) -> String {
        let who = match &self.source {
            ChunkSource::Utterance { speaker, .. } => speaker.display_name().to_string(),
            ChunkSource::Scale { .. } => "Self-report".to_string(),
        };
        format!("- [{}] {who}: {}", self.session_id, self.text)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetrievalIndex {
    chunks: Vec<Chunk>,
}

impl RetrievalIndex {
    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub(crate) fn add_session(&mut self, session: &SessionTranscript) {
        for u in session.dialogue() {
            self.chunks.push(Chunk {
                session_id: session.session_id().to_string(),
                source: ChunkSource::Utterance {
                    turn_index: u.turn_index,
                    speaker: u.speaker,
                },
                text: u.text.clone(),
            });
        }
        for r in &session.meta.scale_records {
            self.chunks.push(Chunk {
                session_id: session.session_id().to_string(),
                source: ChunkSource::Scale {
                    scale_id: r.scale_id.clone(),
                },
                text: r.render(),
            });
        }
    }
}

#[async_trait]
pub trait RetrievalScorer: Send + Sync {
    fn id(&self) -> &str;

    /// One relevance score per chunk; non-positive scores are never returned.
    async fn score(&self, query: &str, chunks: &[Chunk]) -> Result<Vec<f64>>;
}

/// Number of distinct content words shared by query and chunk.
#[derive(Debug, Default, Clone, Copy)]
pub struct LexicalScorer;

#[async_trait]
impl RetrievalScorer for LexicalScorer {
    fn id(&self) -> &str {
        "lexical"
    }

    async fn score(&self, query: &str, chunks: &[Chunk]) -> Result<Vec<f64>> {
        let q = content_words(query);
        Ok(chunks
            .iter()
            .map(|c| content_words(&c.text).intersection(&q).count() as f64)
            .collect())
    }
}

/// Cosine similarity between embeddings from an embedding endpoint. Chunk
/// embeddings are cached by chunk key.
pub struct EmbeddingScorer {
    backend: Arc<dyn EmbeddingBackend>,
    cache: Mutex<HashMap<String, Vec<f32>>>,
}

impl EmbeddingScorer {
    pub fn new(backend: Arc<dyn EmbeddingBackend>) -> Self {
        EmbeddingScorer {
            backend,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

pub(crate) fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[async_trait]
impl RetrievalScorer for EmbeddingScorer {
    fn id(&self) -> &str {
        self.backend.id()
    }

    async fn score(&self, query: &str, chunks: &[Chunk]) -> Result<Vec<f64>> {
        let missing: Vec<&Chunk> = {
            let cache = self.cache.lock().expect("embedding cache");
            chunks.iter().filter(|c| !cache.contains_key(&c.key())).collect()
        };
        let mut texts: Vec<String> = vec![query.to_string()];
        texts.extend(missing.iter().map(|c| c.text.clone()));
        let mut vectors = self.backend.embed(&texts).await?.into_iter();
        let q = vectors
            .next()
            .ok_or_else(|| Error::BackendUnavailable("embedding backend returned nothing".into()))?;
        let mut cache = self.cache.lock().expect("embedding cache");
        for (c, v) in missing.iter().zip(vectors) {
            cache.insert(c.key(), v);
        }
        chunks
            .iter()
            .map(|c| {
                cache
                    .get(&c.key())
                    .map(|v| cosine(&q, v))
                    .ok_or_else(|| Error::BackendUnavailable("embedding backend returned too few vectors".into()))
            })
            .collect()
    }
}

/// Top-`k` chunks with positive score, best first; ties keep index order.
pub async fn rank_chunks<'a>(
    query: &str,
    index: &'a RetrievalIndex,
    scorer: &dyn RetrievalScorer,
    k: usize,
) -> Result<Vec<(&'a Chunk, f64)>> {
    let scores = scorer.score(query, index.chunks()).await?;
    let mut ranked: Vec<(usize, f64)> = scores
        .into_iter()
        .enumerate()
        .filter(|(_, s)| *s > 0.0)
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked
        .into_iter()
        .take(k)
        .map(|(i, s)| (&index.chunks()[i], s))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Supplement {
    pub text: String,
    pub chunk_keys: Vec<String>,
}

/// Gate, then retrieve. Returns `None` when the gate says the round does not
/// refer to earlier sessions, when the gate backend is unavailable, or when
/// nothing relevant is archived.
pub async fn query_long_term(
    latest_round: &str,
    store: &MemoryStore,
    gate: &dyn ChatBackend,
    scorer: &dyn RetrievalScorer,
    templates: &TemplateSet,
    k: usize,
    char_budget: usize,
) -> Result<Option<Supplement>> {
    if k == 0 {
        return Err(Error::Config("retrieval k must be at least 1".into()));
    }
    if store.index().is_empty() {
        return Ok(None);
    }
    let mut slots: HashMap<&str, String> = HashMap::new();
    slots.insert("round", latest_round.to_string());
    let prompt = templates.memory_gate.render_with(&slots)?;
    let refers_back = match gate.complete(&[ChatMessage::user(prompt.rendered)]).await {
        Ok(answer) => parse_yes_no(&answer),
        Err(Error::BackendUnavailable(msg)) => {
            tracing::warn!(%msg, "memory gate unavailable, skipping retrieval");
            false
        }
        Err(e) => return Err(e),
    };
    if !refers_back {
        return Ok(None);
    }
    let hits = rank_chunks(latest_round, store.index(), scorer, k).await?;
    if hits.is_empty() {
        return Ok(None);
    }
    let joined = hits
        .iter()
        .map(|(c, _)| c.render())
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Some(Supplement {
        text: truncate_chars(&joined, char_budget).to_string(),
        chunk_keys: hits.iter().map(|(c, _)| c.key()).collect(),
    }))
}
