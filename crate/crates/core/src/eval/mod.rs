//! Metrics over simulated conversations.

mod corpus;
mod judge;
mod similarity;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use corpus::{load_references, load_transcript_groups, seeker_texts, TranscriptGroup};
pub use judge::{ltm_ablation, ltm_probe, parse_judge_score, personality_fidelity, JudgeScore, LtmArms, QuestionScore};
pub use similarity::{EmbeddingCosine, ExactMatch, LexicalOverlap, Prf, SimilarityProvider};

const PERSONALITY_QUESTIONS: &str = include_str!("../../assets/questions/personality.txt");
const LONG_TERM_QUESTIONS: &str = include_str!("../../assets/questions/long_term.txt");

/// Interview questions, one per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionBank {
    pub questions: Vec<String>,
}

impl QuestionBank {
    pub fn parse(text: &str) -> Self {
        QuestionBank {
            questions: text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect(),
        }
    }

    pub fn personality() -> Self {
        Self::parse(PERSONALITY_QUESTIONS)
    }

    pub fn long_term() -> Self {
        Self::parse(LONG_TERM_QUESTIONS)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }
}

/// Average over candidates of the best score among their sampled references.
///
/// A `sample_rate` share of all candidate/reference pairs is drawn uniformly
/// without replacement (at least one pair). Precision, recall and F1 are each
/// maximized independently. Candidates left without any sampled pair do not
/// count towards the average.
pub async fn anthropomorphism(
    candidates: &[String],
    references: &[String],
    provider: &dyn SimilarityProvider,
    sample_rate: f64,
    seed: u64,
) -> Result<Prf> {
    if candidates.is_empty() {
        return Err(Error::EmptyCorpus("candidate utterances".into()));
    }
    if references.is_empty() {
        return Err(Error::EmptyCorpus("reference utterances".into()));
    }
    if !(sample_rate > 0.0 && sample_rate <= 1.0) {
        return Err(Error::Config(format!("sample_rate must lie in (0, 1], got {sample_rate}")));
    }
    let m = references.len();
    let total = candidates.len() * m;
    let take = ((sample_rate * total as f64).ceil() as usize).clamp(1, total);
    let mut pairs: Vec<usize> = if take == total {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, total, take).into_vec()
    };
    pairs.sort_unstable();

    let mut texts: Vec<String> = Vec::new();
    texts.extend(candidates.iter().cloned());
    texts.extend(references.iter().cloned());
    provider.prepare(&texts).await?;

    let mut best: BTreeMap<usize, Prf> = BTreeMap::new();
    for p in pairs {
        let (i, j) = (p / m, p % m);
        let s = provider.score(&candidates[i], &references[j]);
        let e = best.entry(i).or_insert(Prf {
            precision: f64::NEG_INFINITY,
            recall: f64::NEG_INFINITY,
            f1: f64::NEG_INFINITY,
        });
        e.precision = e.precision.max(s.precision);
        e.recall = e.recall.max(s.recall);
        e.f1 = e.f1.max(s.f1);
    }
    let n = best.len() as f64;
    let mut sum = Prf::default();
    for b in best.values() {
        sum.precision += b.precision;
        sum.recall += b.recall;
        sum.f1 += b.f1;
    }
    Ok(Prf {
        precision: sum.precision / n,
        recall: sum.recall / n,
        f1: sum.f1 / n,
    })
}

/// Relative standard deviation in percent, using the sample standard deviation.
pub fn rsd(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "need at least two values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 || !mean.is_finite() {
        return Err(Error::DegenerateInput(format!("mean is {mean}")));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt() / mean * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnthropomorphismReport {
    pub overall: Prf,
    /// Per transcript group (for example per counselor), when there are several.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub groups: BTreeMap<String, Prf>,
    pub candidates: usize,
    pub references: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsdReport {
    pub metric: String,
    pub groups: Vec<String>,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub similarity_provider: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_backend: Option<String>,
    pub sample_seed: u64,
    pub pair_sample_rate: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anthropomorphism: Option<AnthropomorphismReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub personality_fidelity: Option<JudgeScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ltm_accuracy: Option<LtmArms>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rsd: Option<RsdReport>,
    pub provenance: Provenance,
}

impl EvalReport {
    pub fn new(provenance: Provenance) -> Self {
        EvalReport {
            anthropomorphism: None,
            personality_fidelity: None,
            ltm_accuracy: None,
            rsd: None,
            provenance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.provenance.pair_sample_rate;
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::InvalidState(format!("pair_sample_rate {r} outside (0, 1]")));
        }
        if let Some(a) = &self.anthropomorphism {
            if !a.overall.is_finite() || a.groups.values().any(|g| !g.is_finite()) {
                return Err(Error::InvalidState("non-finite anthropomorphism score".into()));
            }
        }
        let judged = self
            .personality_fidelity
            .iter()
            .chain(self.ltm_accuracy.iter().flat_map(|a| a.with_memory.iter().chain(a.without_memory.iter())));
        for j in judged {
            j.validate()?;
        }
        if let Some(r) = &self.rsd {
            if !r.percent.is_finite() {
                return Err(Error::InvalidState("non-finite RSD".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<34} {:>10}", "metric", "value");
        let _ = writeln!(out, "{}", "-".repeat(45));
        let mut row = |name: String, v: f64| {
            let _ = writeln!(out, "{name:<34} {v:>10.4}");
        };
        if let Some(a) = &self.anthropomorphism {
            row("anthropomorphism precision".into(), a.overall.precision);
            row("anthropomorphism recall".into(), a.overall.recall);
            row("anthropomorphism f1".into(), a.overall.f1);
            for (g, s) in &a.groups {
                row(format!("  f1 [{g}]"), s.f1);
            }
        }
        if let Some(p) = &self.personality_fidelity {
            row("personality fidelity".into(), p.mean);
        }
        if let Some(l) = &self.ltm_accuracy {
            if let Some(s) = &l.with_memory {
                row("long-term memory (on)".into(), s.mean);
            }
            if let Some(s) = &l.without_memory {
                row("long-term memory (off)".into(), s.mean);
            }
        }
        if let Some(r) = &self.rsd {
            row(format!("rsd % ({})", r.metric), r.percent);
        }
        let _ = writeln!(
            out,
            "provider {} | seed {} | pair rate {}",
            self.provenance.similarity_provider, self.provenance.sample_seed, self.provenance.pair_sample_rate
        );
        out
    }
}
