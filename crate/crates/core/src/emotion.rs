//! Emotion modulation: a backend-driven inferencer that predicts the emotion
//! of the seeker's next utterance, followed by a distance-weighted random
//! perturbation over an ordered, grouped taxonomy.
//!
//! Groups are ordered along a positive → negative axis. Two labels in the
//! same group are at distance 0, neighbouring groups are at distance 1, and
//! so on. A target label `t` is drawn with probability proportional to
//! `w(d(group(t), group(base)))`, so a whole group receives mass
//! `w(d) * |G| / sum_j w(d_j) * |G_j|`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{ChatBackend, ChatMessage};
use crate::domain::{SeekerConfiguration, SessionTranscript, Speaker};
use crate::error::{Error, Result};
use crate::prompt::TemplateSet;

const DEFAULT_TAXONOMY: &str = include_str!("../assets/taxonomy.toml");

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmotionLabel(String);

impl EmotionLabel {
    pub fn new(label: impl Into<String>) -> Self {
        EmotionLabel(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.trim().is_empty()
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EmotionLabel {
    fn from(s: &str) -> Self {
        EmotionLabel::new(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmotionGroup {
    pub name: String,
    pub members: Vec<EmotionLabel>,
    pub index: usize,
}

/// Distance between two groups of the same taxonomy.
pub fn group_distance(a: &EmotionGroup, b: &EmotionGroup) -> usize {
    a.index.abs_diff(b.index)
}

#[derive(Debug, Deserialize)]
struct TaxonomyFile {
    groups: Vec<GroupEntry>,
}

#[derive(Debug, Deserialize)]
struct GroupEntry {
    name: String,
    members: Vec<String>,
}

/// Ordered, disjoint emotion groups covering every label.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionTaxonomy {
    groups: Vec<EmotionGroup>,
    group_of: HashMap<EmotionLabel, usize>,
}

impl EmotionTaxonomy {
    /// Builds a taxonomy from `(group name, members)` pairs, ordered positive
    /// to negative.
    pub fn new<I, S, L>(groups: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<L>)>,
        S: Into<String>,
        L: Into<String>,
    {
        let mut out = Vec::new();
        let mut group_of = HashMap::new();
        for (index, (name, members)) in groups.into_iter().enumerate() {
            let name = name.into();
            let members: Vec<EmotionLabel> = members
                .into_iter()
                .map(|m| EmotionLabel::new(m.into().trim().to_lowercase()))
                .collect();
            if members.is_empty() {
                return Err(Error::Config(format!("emotion group `{name}` has no members")));
            }
            for m in &members {
                if m.is_empty() {
                    return Err(Error::Config(format!("empty label in group `{name}`")));
                }
                if group_of.insert(m.clone(), index).is_some() {
                    return Err(Error::Config(format!(
                        "label `{m}` appears in more than one group"
                    )));
                }
            }
            out.push(EmotionGroup {
                name,
                members,
                index,
            });
        }
        if out.is_empty() {
            return Err(Error::Config("taxonomy has no groups".into()));
        }
        Ok(EmotionTaxonomy {
            groups: out,
            group_of,
        })
    }

    /// The 27 GoEmotions labels plus neutral, in four sentiment groups.
    pub fn go_emotions() -> Self {
        Self::from_toml_str(DEFAULT_TAXONOMY).expect("bundled taxonomy is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: TaxonomyFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("taxonomy: {e}")))?;
        Self::new(file.groups.into_iter().map(|g| (g.name, g.members)))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::format(path, e))
    }

    pub fn groups(&self) -> &[EmotionGroup] {
        &self.groups
    }

    /// All labels in group order.
    pub fn labels(&self) -> impl Iterator<Item = &EmotionLabel> {
        self.groups.iter().flat_map(|g| g.members.iter())
    }

    pub fn len(&self) -> usize {
        self.group_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.group_of.is_empty()
    }

    pub fn contains(&self, label: &EmotionLabel) -> bool {
        self.group_of.contains_key(label)
    }

    pub fn group_of(&self, label: &EmotionLabel) -> Result<&EmotionGroup> {
        self.group_of
            .get(label)
            .map(|&i| &self.groups[i])
            .ok_or_else(|| Error::UnknownEmotion(label.to_string()))
    }

    /// Maps free-form backend output onto a label, if it names one.
    ///
    /// Accepts the bare label or a `key: label` form, ignoring case,
    /// surrounding whitespace and punctuation.
    pub fn parse_label(&self, text: &str) -> Option<EmotionLabel> {
        let tail = text.rsplit(':').next().unwrap_or(text);
        let cleaned: String = tail
            .trim()
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        let label = EmotionLabel::new(cleaned);
        self.contains(&label).then_some(label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPolicy {
    pub weight_decay: f64,
    #[serde(default)]
    pub rng_seed: Option<u64>,
}

impl Default for PerturbationPolicy {
    fn default() -> Self {
        PerturbationPolicy {
            weight_decay: 0.25,
            rng_seed: None,
        }
    }
}

impl PerturbationPolicy {
    pub fn new(weight_decay: f64) -> Result<Self> {
        let p = PerturbationPolicy {
            weight_decay,
            rng_seed: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.weight_decay > 0.0 && self.weight_decay < 1.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "weight_decay must lie strictly between 0 and 1, got {}",
                self.weight_decay
            )))
        }
    }

    /// Unnormalized per-label weight at group distance `d`.
    pub fn weight(&self, distance: usize) -> f64 {
        self.weight_decay.powi(distance as i32)
    }
}

/// Exact perturbation distribution, in taxonomy label order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionDistribution {
    entries: Vec<(EmotionLabel, f64)>,
}

impl EmotionDistribution {
    pub fn entries(&self) -> &[(EmotionLabel, f64)] {
        &self.entries
    }

    pub fn probability(&self, label: &EmotionLabel) -> f64 {
        self.entries
            .iter()
            .find(|(l, _)| l == label)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn as_map(&self) -> BTreeMap<EmotionLabel, f64> {
        self.entries.iter().cloned().collect()
    }
}

pub fn perturbation_distribution(
    base: &EmotionLabel,
    taxonomy: &EmotionTaxonomy,
    policy: &PerturbationPolicy,
) -> Result<EmotionDistribution> {
    policy.validate()?;
    let base_group = taxonomy.group_of(base)?;
    let normalizer: f64 = taxonomy
        .groups()
        .iter()
        .map(|g| policy.weight(group_distance(g, base_group)) * g.members.len() as f64)
        .sum();
    let entries = taxonomy
        .groups()
        .iter()
        .flat_map(|g| {
            let p = policy.weight(group_distance(g, base_group)) / normalizer;
            g.members.iter().map(move |m| (m.clone(), p))
        })
        .collect();
    Ok(EmotionDistribution { entries })
}

pub fn perturb<R: Rng + ?Sized>(
    base: &EmotionLabel,
    taxonomy: &EmotionTaxonomy,
    policy: &PerturbationPolicy,
    rng: &mut R,
) -> Result<EmotionLabel> {
    let dist = perturbation_distribution(base, taxonomy, policy)?;
    let weights = dist.entries.iter().map(|(_, p)| *p);
    let index = match WeightedIndex::new(weights) {
        Ok(w) => w.sample(rng),
        // Every non-base weight underflowed; only the base group carries mass.
        Err(_) => return Ok(base.clone()),
    };
    Ok(dist.entries[index].0.clone())
}

fn conversation_text(conversation: &SessionTranscript) -> String {
    conversation
        .utterances
        .iter()
        .map(|u| format!("{}: {}", u.speaker.display_name(), u.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Predicts the emotion of the seeker's upcoming utterance.
///
/// An unrecognised answer gets one constrained re-prompt; if that also fails
/// the seeker keeps its current emotion.
pub async fn infer_emotion(
    cfg: &SeekerConfiguration,
    conversation: &SessionTranscript,
    taxonomy: &EmotionTaxonomy,
    templates: &TemplateSet,
    backend: &dyn ChatBackend,
) -> Result<EmotionLabel> {
    match conversation.utterances.last() {
        Some(u) if u.speaker == Speaker::Counselor => {}
        _ => {
            return Err(Error::InvalidState(
                "emotion inference expects the counselor to have spoken last".into(),
            ))
        }
    }
    let labels = taxonomy
        .labels()
        .map(EmotionLabel::as_str)
        .collect::<Vec<_>>()
        .join(", ");
    let mut slots = HashMap::new();
    slots.insert("profile", cfg.profile().render());
    slots.insert("complaint", cfg.complaint().to_string());
    slots.insert("situation", cfg.situation().to_string());
    slots.insert("status", cfg.status().to_string());
    slots.insert("emotion", cfg.emotion().to_string());
    slots.insert("conversation", conversation_text(conversation));
    slots.insert("labels", labels);

    let prompt = templates.emotion_infer.render_with(&slots)?;
    let answer = backend.complete(&[ChatMessage::user(prompt.rendered)]).await?;
    if let Some(label) = taxonomy.parse_label(&answer) {
        return Ok(label);
    }

    slots.insert("previous_answer", answer.trim().to_string());
    let retry = templates.emotion_retry.render_with(&slots)?;
    let answer = backend.complete(&[ChatMessage::user(retry.rendered)]).await?;
    match taxonomy.parse_label(&answer) {
        Some(label) => Ok(label),
        None => {
            tracing::warn!(answer = %answer.trim(), "emotion inferencer gave no valid label, keeping current emotion");
            Ok(cfg.emotion().clone())
        }
    }
}
