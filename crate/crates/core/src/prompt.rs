//! Prompt templates with named slots.
//!
//! Template files are plain text. `{name}` marks a slot, `{{` and `}}` are
//! literal braces, and lines starting with `;;` are comments that never
//! reach the model. Every declared slot must be filled with non-empty text
//! for rendering to succeed.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::SeekerConfiguration;
use crate::emotion::{EmotionLabel, EmotionTaxonomy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    id: String,
    pieces: Vec<Piece>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptAssembly {
    pub template_id: String,
    pub filled_slots: BTreeMap<String, String>,
    pub rendered: String,
}

impl PromptTemplate {
    pub fn parse(id: impl Into<String>, source: &str) -> Result<Self> {
        let id = id.into();
        let body: String = source
            .split_inclusive('\n')
            .filter(|line| !line.starts_with(";;"))
            .collect();
        let mut pieces = Vec::new();
        let mut text = String::new();
        let mut chars = body.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '{' if chars.peek() == Some(&'{') => {
                    chars.next();
                    text.push('{');
                }
                '}' if chars.peek() == Some(&'}') => {
                    chars.next();
                    text.push('}');
                }
                '{' => {
                    let mut name = String::new();
                    loop {
                        match chars.next() {
                            Some('}') => break,
                            Some(ch) if ch.is_ascii_lowercase() || ch == '_' || ch.is_ascii_digit() => {
                                name.push(ch)
                            }
                            _ => {
                                return Err(Error::Config(format!(
                                    "template `{id}`: malformed slot near `{{{name}`"
                                )))
                            }
                        }
                    }
                    if name.is_empty() {
                        return Err(Error::Config(format!("template `{id}`: empty slot name")));
                    }
                    if !text.is_empty() {
                        pieces.push(Piece::Text(std::mem::take(&mut text)));
                    }
                    pieces.push(Piece::Slot(name));
                }
                '}' => {
                    return Err(Error::Config(format!(
                        "template `{id}`: unmatched `}}`"
                    )))
                }
                other => text.push(other),
            }
        }
        if !text.is_empty() {
            pieces.push(Piece::Text(text));
        }
        Ok(PromptTemplate { id, pieces })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Distinct slot names in order of first appearance.
    pub fn slots(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for p in &self.pieces {
            if let Piece::Slot(name) = p {
                if !out.contains(&name.as_str()) {
                    out.push(name);
                }
            }
        }
        out
    }

    pub fn render(&self, values: &HashMap<String, String>) -> Result<PromptAssembly> {
        let borrowed: HashMap<&str, String> =
            values.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        self.render_with(&borrowed)
    }

    pub fn render_with(&self, values: &HashMap<&str, String>) -> Result<PromptAssembly> {
        let mut filled = BTreeMap::new();
        for name in self.slots() {
            match values.get(name) {
                Some(v) if !v.trim().is_empty() => {
                    filled.insert(name.to_string(), v.clone());
                }
                _ => return Err(Error::MissingSlot(name.to_string())),
            }
        }
        let mut rendered = String::new();
        for p in &self.pieces {
            match p {
                Piece::Text(t) => rendered.push_str(t),
                Piece::Slot(name) => rendered.push_str(&filled[name]),
            }
        }
        Ok(PromptAssembly {
            template_id: self.id.clone(),
            filled_slots: filled,
            rendered,
        })
    }
}

macro_rules! template_set {
    ($($field:ident => $file:literal),+ $(,)?) => {
        /// Every prompt the engine sends, keyed by role.
        #[derive(Debug, Clone, PartialEq, Eq)]
        pub struct TemplateSet {
            $(pub $field: PromptTemplate,)+
        }

        impl Default for TemplateSet {
            fn default() -> Self {
                TemplateSet {
                    $($field: PromptTemplate::parse(
                        concat!("default/", stringify!($field)),
                        include_str!(concat!("../assets/templates/", $file)),
                    ).expect("bundled template parses"),)+
                }
            }
        }

        impl TemplateSet {
            pub const FILE_NAMES: &'static [&'static str] = &[$($file),+];

            /// Defaults, with any `<name>.txt` found in `dir` taking precedence.
            pub fn load_overrides(dir: impl AsRef<Path>) -> Result<Self> {
                let dir = dir.as_ref();
                let mut set = TemplateSet::default();
                $(
                    let path = dir.join($file);
                    if path.exists() {
                        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                        set.$field = PromptTemplate::parse(path.display().to_string(), &text)?;
                    }
                )+
                Ok(set)
            }
        }
    };
}

template_set! {
    seeker_system => "seeker_system.txt",
    reminder => "reminder.txt",
    reminder_supplement => "reminder_supplement.txt",
    emotion_infer => "emotion_infer.txt",
    emotion_retry => "emotion_retry.txt",
    chain_generate => "chain_generate.txt",
    chain_retry => "chain_retry.txt",
    recognizer => "recognizer.txt",
    memory_gate => "memory_gate.txt",
    scale_item => "scale_item.txt",
    scale_retry => "scale_retry.txt",
    status_summary => "status_summary.txt",
    situation_summary => "situation_summary.txt",
    counselor_system => "counselor_system.txt",
    judge_fidelity => "judge_fidelity.txt",
    judge_memory => "judge_memory.txt",
    judge_retry => "judge_retry.txt",
}

fn bullet_list(items: &[String]) -> String {
    if items.is_empty() {
        return "- No additional rules.".to_string();
    }
    items
        .iter()
        .map(|s| format!("- {}", s.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Renders the seeker's system prompt from its five configuration slots and
/// style rules.
pub fn render_seeker_system_prompt(templates: &TemplateSet, cfg: &SeekerConfiguration) -> Result<PromptAssembly> {
    let mut values: HashMap<&str, String> = HashMap::new();
    for (name, value) in cfg.slots() {
        if value.trim().is_empty() {
            return Err(Error::MissingSlot(name.to_string()));
        }
        values.insert(name, value);
    }
    values.insert("style_constraints", bullet_list(cfg.style_constraints()));
    templates.seeker_system.render_with(&values)
}

/// Renders the per-round reminder. The supplement section is present iff a
/// supplement is given.
pub fn render_reminder(
    templates: &TemplateSet,
    taxonomy: &EmotionTaxonomy,
    emotion: &EmotionLabel,
    complaint: &str,
    supplement: Option<&str>,
) -> Result<String> {
    if !taxonomy.contains(emotion) {
        return Err(Error::UnknownEmotion(emotion.to_string()));
    }
    let mut values: HashMap<&str, String> = HashMap::new();
    values.insert("emotion", emotion.to_string());
    values.insert("complaint", complaint.to_string());
    let mut out = templates.reminder.render_with(&values)?.rendered;
    if let Some(s) = supplement.filter(|s| !s.trim().is_empty()) {
        let mut values: HashMap<&str, String> = HashMap::new();
        values.insert("supplement", s.to_string());
        out.push_str(&templates.reminder_supplement.render_with(&values)?.rendered);
    }
    Ok(out)
}
