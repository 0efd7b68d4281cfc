use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::backend::EmbeddingBackend;
use crate::error::Result;
use crate::memory::cosine;
use crate::text;

/// Precision, recall and F1 of one comparison, each in [0, 1].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn uniform(v: f64) -> Self {
        Prf {
            precision: v,
            recall: v,
            f1: v,
        }
    }

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f1 }
    }

    pub fn is_finite(&self) -> bool {
        self.precision.is_finite() && self.recall.is_finite() && self.f1.is_finite()
    }
}

/// Scores a candidate utterance against a reference utterance.
///
/// `prepare` is called once with every text before scoring so that
/// providers backed by a remote service can batch their requests.
#[async_trait]
pub trait SimilarityProvider: Send + Sync {
    fn id(&self) -> &str;

    async fn prepare(&self, _texts: &[String]) -> Result<()> {
        Ok(())
    }

    fn score(&self, candidate: &str, reference: &str) -> Prf;
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// 1 if the texts are equal after whitespace and case normalization, else 0.
#[derive(Debug, Default, Clone, Copy)]
pub struct ExactMatch;

#[async_trait]
impl SimilarityProvider for ExactMatch {
    fn id(&self) -> &str {
        "exact"
    }

    fn score(&self, candidate: &str, reference: &str) -> Prf {
        Prf::uniform(if normalize(candidate) == normalize(reference) { 1.0 } else { 0.0 })
    }
}

/// Token multiset overlap: precision over candidate tokens, recall over
/// reference tokens.
#[derive(Debug, Default, Clone, Copy)]
pub struct LexicalOverlap;

#[async_trait]
impl SimilarityProvider for LexicalOverlap {
    fn id(&self) -> &str {
        "lexical"
    }

    fn score(&self, candidate: &str, reference: &str) -> Prf {
        let c = text::tokens(candidate);
        let r = text::tokens(reference);
        if c.is_empty() || r.is_empty() {
            return Prf::default();
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in &r {
            *counts.entry(t).or_default() += 1;
        }
        let mut common = 0usize;
        for t in &c {
            if let Some(n) = counts.get_mut(t.as_str()) {
                if *n > 0 {
                    *n -= 1;
                    common += 1;
                }
            }
        }
        Prf::from_pr(common as f64 / c.len() as f64, common as f64 / r.len() as f64)
    }
}

/// Sentence-embedding cosine, clamped to [0, 1], reported as P = R = F1.
/// A stand-in for token-level BERTScore.
pub struct EmbeddingCosine {
    id: String,
    backend: Arc<dyn EmbeddingBackend>,
    cache: Mutex<HashMap<String, Vec<f32>>>,
}

impl EmbeddingCosine {
    pub fn new(backend: Arc<dyn EmbeddingBackend>) -> Self {
        EmbeddingCosine {
            id: format!("embedding-cosine:{}", backend.id()),
            backend,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

#[async_trait]
impl SimilarityProvider for EmbeddingCosine {
    fn id(&self) -> &str {
        &self.id
    }

    async fn prepare(&self, texts: &[String]) -> Result<()> {
        let missing: Vec<String> = {
            let cache = self.cache.lock().unwrap();
            let mut seen = std::collections::HashSet::new();
            texts
                .iter()
                .filter(|t| !cache.contains_key(*t) && seen.insert(t.as_str()))
                .cloned()
                .collect()
        };
        for batch in missing.chunks(64) {
            let vectors = self.backend.embed(batch).await?;
            let mut cache = self.cache.lock().unwrap();
            for (t, v) in batch.iter().zip(vectors) {
                cache.insert(t.clone(), v);
            }
        }
        Ok(())
    }

    fn score(&self, candidate: &str, reference: &str) -> Prf {
        let cache = self.cache.lock().unwrap();
        match (cache.get(candidate), cache.get(reference)) {
            (Some(a), Some(b)) => Prf::uniform(cosine(a, b).clamp(0.0, 1.0)),
            _ => Prf::default(),
        }
    }
}
