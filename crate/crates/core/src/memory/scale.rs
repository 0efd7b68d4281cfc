use std::collections::HashMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::backend::{ChatBackend, ChatMessage};
use crate::domain::{Clock, SeekerConfiguration};
use crate::error::{Error, Result};
use crate::prompt::TemplateSet;

const PLACEHOLDER_SCALES: &str = include_str!("../../assets/scales.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleOption {
    pub label: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleItem {
    pub question: String,
    pub options: Vec<ScaleOption>,
    /// Option used when the answer stays invalid; defaults to the lower middle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_option: Option<usize>,
}

impl ScaleItem {
    pub fn default_index(&self) -> usize {
        self.default_option
            .unwrap_or((self.options.len().saturating_sub(1)) / 2)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Sum,
    Mean,
}

impl Aggregation {
    pub fn apply(&self, scores: &[f64]) -> f64 {
        let sum: f64 = scores.iter().sum();
        match self {
            Aggregation::Sum => sum,
            Aggregation::Mean if scores.is_empty() => 0.0,
            Aggregation::Mean => sum / scores.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleDefinition {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub aggregation: Aggregation,
    /// Higher totals mean more distress.
    #[serde(default = "default_true")]
    pub higher_is_worse: bool,
    pub items: Vec<ScaleItem>,
}

fn default_true() -> bool {
    true
}

#[derive(Deserialize)]
struct ScaleFile {
    scales: Vec<ScaleDefinition>,
}

impl ScaleDefinition {
    pub fn validate(&self) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::Config(format!("scale `{}` has no items", self.id)));
        }
        for (i, item) in self.items.iter().enumerate() {
            if item.options.is_empty() {
                return Err(Error::Config(format!("scale `{}` item {i} has no options", self.id)));
            }
            if item.default_index() >= item.options.len() {
                return Err(Error::Config(format!(
                    "scale `{}` item {i} default option out of range",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Placeholder instruments bundled with the engine. They are not clinical
    /// scales; load licensed instruments from a file instead.
    pub fn placeholders() -> Vec<ScaleDefinition> {
        Self::from_toml_str(PLACEHOLDER_SCALES).expect("bundled scales are valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Vec<ScaleDefinition>> {
        let file: ScaleFile = toml::from_str(text).map_err(|e| Error::Config(format!("scales: {e}")))?;
        for s in &file.scales {
            s.validate()?;
        }
        Ok(file.scales)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vec<ScaleDefinition>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::format(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResponse {
    pub question: String,
    pub option_index: usize,
    pub option_label: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub defaulted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub scale_id: String,
    pub items: Vec<ItemResponse>,
    pub total: f64,
    pub aggregation: Aggregation,
    pub higher_is_worse: bool,
    pub administered_at: DateTime<Utc>,
    pub session_id: String,
}

impl ScaleRecord {
    pub fn recompute_total(&self) -> f64 {
        let scores: Vec<f64> = self.items.iter().map(|i| i.score).collect();
        self.aggregation.apply(&scores)
    }

    pub fn render(&self) -> String {
        let answers = self
            .items
            .iter()
            .map(|i| format!("{} -> {}", i.question, i.option_label))
            .collect::<Vec<_>>()
            .join("; ");
        format!("Self-report {} total {}: {}", self.scale_id, self.total, answers)
    }
}

/// Maps an answer onto an option index: the first integer in the reply if it
/// is a valid index, otherwise an exact (case-insensitive) option label.
pub fn parse_option(answer: &str, item: &ScaleItem) -> Option<usize> {
    let digits: String = answer
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    if let Ok(n) = digits.parse::<usize>() {
        if n < item.options.len() {
            return Some(n);
        }
    }
    let cleaned = answer.trim().trim_end_matches('.').to_lowercase();
    item.options
        .iter()
        .position(|o| o.label.to_lowercase() == cleaned)
}

fn render_options(item: &ScaleItem) -> String {
    item.options
        .iter()
        .enumerate()
        .map(|(i, o)| format!("{i}. {}", o.label))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Has the seeker answer every item of every scale in character. An invalid
/// answer is asked again once, then the item's default option is recorded.
pub async fn administer_scales(
    cfg: &SeekerConfiguration,
    scales: &[ScaleDefinition],
    session_id: &str,
    templates: &TemplateSet,
    backend: &dyn ChatBackend,
    clock: &dyn Clock,
) -> Result<Vec<ScaleRecord>> {
    let mut records = Vec::with_capacity(scales.len());
    for scale in scales {
        let mut items = Vec::with_capacity(scale.items.len());
        for item in &scale.items {
            let mut slots: HashMap<&str, String> = HashMap::new();
            slots.insert("scale_name", scale.name.clone());
            slots.insert("profile", cfg.profile().render());
            slots.insert("complaint", cfg.complaint().to_string());
            slots.insert("question", item.question.clone());
            slots.insert("options", render_options(item));
            let prompt = templates.scale_item.render_with(&slots)?.rendered;
            let mut messages = vec![ChatMessage::user(prompt)];
            let first = backend.complete(&messages).await?;
            let mut chosen = parse_option(&first, item);
            if chosen.is_none() {
                messages.push(ChatMessage::assistant(first));
                messages.push(ChatMessage::user(templates.scale_retry.render_with(&slots)?.rendered));
                let second = backend.complete(&messages).await?;
                chosen = parse_option(&second, item);
            }
            let (index, defaulted) = match chosen {
                Some(i) => (i, false),
                None => (item.default_index(), true),
            };
            let option = &item.options[index];
            items.push(ItemResponse {
                question: item.question.clone(),
                option_index: index,
                option_label: option.label.clone(),
                score: option.score,
                defaulted,
            });
        }
        let scores: Vec<f64> = items.iter().map(|i| i.score).collect();
        records.push(ScaleRecord {
            scale_id: scale.id.clone(),
            total: scale.aggregation.apply(&scores),
            items,
            aggregation: scale.aggregation,
            higher_is_worse: scale.higher_is_worse,
            administered_at: clock.now(),
            session_id: session_id.to_string(),
        });
    }
    Ok(records)
}
