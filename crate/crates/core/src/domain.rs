//! Shared domain types: seeker configuration, utterances and transcripts,
//! plus the on-disk transcript format.
//!
//! A transcript is stored as two files next to each other:
//! `<session_id>.jsonl` holds one utterance per line and
//! `<session_id>.meta.json` holds the session metadata.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::complaint::ComplaintChain;
use crate::emotion::EmotionLabel;
use crate::error::{Error, Result};
use crate::memory::ScaleRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    NonBinary,
    Other,
}

impl Gender {
    pub fn as_str(&self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::NonBinary => "non_binary",
            Gender::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationshipStatus {
    Single,
    Dating,
    Married,
    Divorced,
    Widowed,
    Other,
}

impl RelationshipStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RelationshipStatus::Single => "single",
            RelationshipStatus::Dating => "dating",
            RelationshipStatus::Married => "married",
            RelationshipStatus::Divorced => "divorced",
            RelationshipStatus::Widowed => "widowed",
            RelationshipStatus::Other => "other",
        }
    }
}

/// Static personal information. The four structured fields drive event
/// matching; `background` is free text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub age: u32,
    pub gender: Gender,
    pub job: String,
    pub relationship_status: RelationshipStatus,
    #[serde(default)]
    pub background: String,
}

impl Profile {
    pub fn render(&self) -> String {
        let mut out = format!(
            "age {}, {}, {}, {}",
            self.age,
            self.gender.as_str().replace('_', "-"),
            self.job.trim(),
            self.relationship_status.as_str()
        );
        if !self.background.trim().is_empty() {
            out.push_str(". ");
            out.push_str(self.background.trim());
        }
        out
    }
}

/// One seeker document on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeekerProfile {
    pub id: String,
    #[serde(flatten)]
    pub profile: Profile,
    /// Seed description of the chief complaint, used to generate the chain.
    pub complaint: String,
    #[serde(default)]
    pub style_constraints: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_emotion: Option<EmotionLabel>,
}

impl SeekerProfile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let p: SeekerProfile =
            toml::from_str(text).map_err(|e| Error::Config(format!("seeker profile: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::format(path, e))
    }

    /// Loads every `*.toml` seeker document in `dir`, sorted by id.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Vec<Self>> {
        let dir = dir.as_ref();
        let mut out = Vec::new();
        for path in sorted_entries(dir)? {
            if path.extension().is_some_and(|e| e == "toml") {
                out.push(Self::load(&path)?);
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::Config("seeker id is empty".into()));
        }
        if self
            .id
            .chars()
            .any(|c| !(c.is_ascii_alphanumeric() || c == '-' || c == '_'))
        {
            return Err(Error::Config(format!(
                "seeker id `{}` may only contain ASCII letters, digits, `-` and `_`",
                self.id
            )));
        }
        if self.profile.job.trim().is_empty() {
            return Err(Error::Config(format!("seeker `{}` has no job", self.id)));
        }
        if self.complaint.trim().is_empty() {
            return Err(Error::Config(format!("seeker `{}` has no complaint", self.id)));
        }
        Ok(())
    }
}

pub(crate) fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

pub const DEFAULT_STYLE_CONSTRAINTS: &[&str] = &[
    "Reply in one to three short sentences, as a person speaking, not writing.",
    "Do not readily accept advice; voice doubts the way a real client would.",
    "Never mention that you are an AI or a simulation.",
];

/// The role configuration of a simulated seeker. The profile is fixed at
/// construction; the four remaining slots change as the session evolves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeekerConfiguration {
    profile: Profile,
    complaint: String,
    situation: String,
    status: String,
    emotion: EmotionLabel,
    style_constraints: Vec<String>,
}

impl SeekerConfiguration {
    pub fn new(profile: Profile) -> Self {
        SeekerConfiguration {
            profile,
            complaint: String::new(),
            situation: String::new(),
            status: String::new(),
            emotion: EmotionLabel::new(""),
            style_constraints: DEFAULT_STYLE_CONSTRAINTS
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    pub fn with_complaint(mut self, v: impl Into<String>) -> Self {
        self.complaint = v.into();
        self
    }

    pub fn with_situation(mut self, v: impl Into<String>) -> Self {
        self.situation = v.into();
        self
    }

    pub fn with_status(mut self, v: impl Into<String>) -> Self {
        self.status = v.into();
        self
    }

    pub fn with_emotion(mut self, v: impl Into<EmotionLabel>) -> Self {
        self.emotion = v.into();
        self
    }

    pub fn with_style_constraints(mut self, v: Vec<String>) -> Self {
        self.style_constraints = v;
        self
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn complaint(&self) -> &str {
        &self.complaint
    }

    pub fn situation(&self) -> &str {
        &self.situation
    }

    pub fn status(&self) -> &str {
        &self.status
    }

    pub fn emotion(&self) -> &EmotionLabel {
        &self.emotion
    }

    pub fn style_constraints(&self) -> &[String] {
        &self.style_constraints
    }

    pub fn set_complaint(&mut self, v: impl Into<String>) {
        self.complaint = v.into();
    }

    pub fn set_situation(&mut self, v: impl Into<String>) {
        self.situation = v.into();
    }

    pub fn set_status(&mut self, v: impl Into<String>) {
        self.status = v.into();
    }

    pub fn set_emotion(&mut self, v: EmotionLabel) {
        self.emotion = v;
    }

    /// The five configuration slots in template order.
    pub fn slots(&self) -> [(&'static str, String); 5] {
        [
            ("profile", self.profile.render()),
            ("complaint", self.complaint.clone()),
            ("situation", self.situation.clone()),
            ("status", self.status.clone()),
            ("emotion", self.emotion.to_string()),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Counselor,
    Seeker,
    System,
}

impl Speaker {
    pub fn display_name(&self) -> &'static str {
        match self {
            Speaker::Counselor => "Counselor",
            Speaker::Seeker => "Seeker",
            Speaker::System => "System",
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotations {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<EmotionLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complaint_stage: Option<usize>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub retrieval_supplement: bool,
    /// The reminder that was visible to the generator for this utterance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reminder: Option<String>,
}

impl Annotations {
    pub fn is_empty(&self) -> bool {
        *self == Annotations::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub turn_index: usize,
    pub speaker: Speaker,
    pub session_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Annotations::is_empty")]
    pub annotations: Annotations,
}

/// Everything about a session except its utterances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub seeker_id: String,
    pub opened_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub scale_records: Vec<ScaleRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ComplaintChain>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub incomplete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    #[serde(flatten)]
    pub meta: SessionMeta,
    pub utterances: Vec<Utterance>,
}

impl SessionTranscript {
    pub fn new(session_id: impl Into<String>, seeker_id: impl Into<String>, opened_at: DateTime<Utc>) -> Self {
        SessionTranscript {
            meta: SessionMeta {
                session_id: session_id.into(),
                seeker_id: seeker_id.into(),
                opened_at,
                closed_at: None,
                scale_records: Vec::new(),
                report: None,
                template_id: None,
                chain: None,
                incomplete: false,
            },
            utterances: Vec::new(),
        }
    }

    pub fn session_id(&self) -> &str {
        &self.meta.session_id
    }

    pub fn seeker_id(&self) -> &str {
        &self.meta.seeker_id
    }

    pub fn is_open(&self) -> bool {
        self.meta.closed_at.is_none()
    }

    pub fn next_turn_index(&self) -> usize {
        self.utterances.last().map_or(0, |u| u.turn_index + 1)
    }

    /// Appends an utterance. The counselor must open the conversation and
    /// counselor and seeker turns must alternate; system lines are exempt.
    pub fn push(&mut self, speaker: Speaker, text: impl Into<String>, annotations: Annotations) -> Result<&Utterance> {
        if !self.is_open() {
            return Err(Error::InvalidState(format!(
                "session {} is closed",
                self.meta.session_id
            )));
        }
        let last_dialogue = self
            .utterances
            .iter()
            .rev()
            .find(|u| u.speaker != Speaker::System)
            .map(|u| u.speaker);
        let ok = matches!(
            (speaker, last_dialogue),
            (Speaker::System, _)
                | (Speaker::Counselor, None | Some(Speaker::Seeker))
                | (Speaker::Seeker, Some(Speaker::Counselor))
        );
        if !ok {
            return Err(Error::InvalidState(format!(
                "{speaker} cannot speak after {}",
                last_dialogue.map_or("nobody", |s| s.display_name())
            )));
        }
        let utterance = Utterance {
            turn_index: self.next_turn_index(),
            speaker,
            session_id: self.meta.session_id.clone(),
            text: text.into(),
            annotations,
        };
        self.utterances.push(utterance);
        Ok(self.utterances.last().expect("just pushed"))
    }

    /// Utterances without system lines.
    pub fn dialogue(&self) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(|u| u.speaker != Speaker::System)
    }

    pub fn render_text(&self) -> String {
        self.dialogue()
            .map(|u| format!("{}: {}", u.speaker, u.text))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn utterances_to_jsonl(&self) -> String {
        utterances_to_jsonl(&self.utterances)
    }

    pub fn transcript_path(dir: &Path, session_id: &str) -> PathBuf {
        dir.join(format!("{session_id}.jsonl"))
    }

    pub fn meta_path(dir: &Path, session_id: &str) -> PathBuf {
        dir.join(format!("{session_id}.meta.json"))
    }

    /// Writes the utterance file and the metadata sidecar into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let lines = Self::transcript_path(dir, self.session_id());
        write_atomic(&lines, self.utterances_to_jsonl().as_bytes())?;
        let meta = Self::meta_path(dir, self.session_id());
        let mut doc = serde_json::to_string_pretty(&self.meta)
            .map_err(|e| Error::format(&meta, e))?;
        doc.push('\n');
        write_atomic(&meta, doc.as_bytes())
    }

    pub fn load(dir: &Path, session_id: &str) -> Result<Self> {
        let meta_path = Self::meta_path(dir, session_id);
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: SessionMeta =
            serde_json::from_str(&text).map_err(|e| Error::format(&meta_path, e))?;
        let lines_path = Self::transcript_path(dir, session_id);
        let text = fs::read_to_string(&lines_path).map_err(|e| Error::io(&lines_path, e))?;
        let utterances = utterances_from_jsonl(&text).map_err(|e| Error::format(&lines_path, e))?;
        Ok(SessionTranscript { meta, utterances })
    }

    /// Loads every session stored in `dir`, ordered by opening time.
    pub fn load_dir(dir: &Path) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        if !dir.exists() {
            return Ok(out);
        }
        for path in sorted_entries(dir)? {
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            if let Some(session_id) = name.strip_suffix(".meta.json") {
                out.push(Self::load(dir, session_id)?);
            }
        }
        out.sort_by(|a, b| {
            (a.meta.opened_at, a.session_id()).cmp(&(b.meta.opened_at, b.session_id()))
        });
        Ok(out)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn utterances_to_jsonl(utterances: &[Utterance]) -> String {
    let mut out = String::new();
    for u in utterances {
        out.push_str(&serde_json::to_string(u).expect("utterance serializes"));
        out.push('\n');
    }
    out
}

pub fn utterances_from_jsonl(text: &str) -> std::result::Result<Vec<Utterance>, String> {
    let mut out: Vec<Utterance> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let u: Utterance =
            serde_json::from_str(line).map_err(|e| format!("line {}: {e}", n + 1))?;
        if let Some(prev) = out.last() {
            if u.turn_index <= prev.turn_index {
                return Err(format!("line {}: turn_index is not increasing", n + 1));
            }
        }
        out.push(u);
    }
    Ok(out)
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that starts at a fixed instant and advances one second per read.
#[derive(Debug)]
pub struct LogicalClock {
    next: AtomicI64,
}

impl LogicalClock {
    pub fn starting_at(epoch_secs: i64) -> Self {
        LogicalClock {
            next: AtomicI64::new(epoch_secs),
        }
    }
}

impl Default for LogicalClock {
    fn default() -> Self {
        // 2025-01-01T00:00:00Z
        Self::starting_at(1_735_689_600)
    }
}

impl Clock for LogicalClock {
    fn now(&self) -> DateTime<Utc> {
        let secs = self.next.fetch_add(1, Ordering::SeqCst);
        Utc.timestamp_opt(secs, 0).single().expect("in range")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> Profile {
        Profile {
            age: 21,
            gender: Gender::Female,
            job: "student".into(),
            relationship_status: RelationshipStatus::Single,
            background: "Lives in a dorm.".into(),
        }
    }

    #[test]
    fn alternation_is_enforced() {
        let mut t = SessionTranscript::new("s1", "p1", LogicalClock::default().now());
        assert!(t.push(Speaker::Seeker, "hi", Annotations::default()).is_err());
        t.push(Speaker::Counselor, "hello", Annotations::default()).unwrap();
        t.push(Speaker::System, "note", Annotations::default()).unwrap();
        assert!(t.push(Speaker::Counselor, "again", Annotations::default()).is_err());
        t.push(Speaker::Seeker, "hi", Annotations::default()).unwrap();
        let idx: Vec<usize> = t.utterances.iter().map(|u| u.turn_index).collect();
        assert_eq!(idx, vec![0, 1, 2]);
    }

    #[test]
    fn closed_transcript_rejects_appends() {
        let clock = LogicalClock::default();
        let mut t = SessionTranscript::new("s1", "p1", clock.now());
        t.meta.closed_at = Some(clock.now());
        assert!(t.push(Speaker::Counselor, "x", Annotations::default()).is_err());
    }

    #[test]
    fn jsonl_rejects_non_increasing_turns() {
        let text = "{\"turn_index\":1,\"speaker\":\"counselor\",\"session_id\":\"s\",\"text\":\"a\"}\n\
                    {\"turn_index\":1,\"speaker\":\"seeker\",\"session_id\":\"s\",\"text\":\"b\"}\n";
        assert!(utterances_from_jsonl(text).is_err());
    }

    #[test]
    fn save_and_load_roundtrip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let clock = LogicalClock::default();
        let mut t = SessionTranscript::new("p1-s001", "p1", clock.now());
        t.push(Speaker::Counselor, "How was your week?", Annotations::default())
            .unwrap();
        t.push(
            Speaker::Seeker,
            "Not great, \"honestly\".\nI barely slept.",
            Annotations {
                emotion: Some("sadness".into()),
                complaint_stage: Some(0),
                retrieval_supplement: true,
                reminder: Some("r".into()),
            },
        )
        .unwrap();
        t.meta.closed_at = Some(clock.now());
        t.save(dir.path()).unwrap();
        let bytes = fs::read(SessionTranscript::transcript_path(dir.path(), "p1-s001")).unwrap();
        let loaded = SessionTranscript::load(dir.path(), "p1-s001").unwrap();
        assert_eq!(loaded, t);
        assert_eq!(loaded.utterances_to_jsonl().as_bytes(), &bytes[..]);
        assert_eq!(SessionTranscript::load_dir(dir.path()).unwrap(), vec![t]);
    }

    #[test]
    fn seeker_profile_toml() {
        let doc = r#"
id = "s01"
age = 21
gender = "female"
job = "student"
relationship_status = "single"
background = "Second-year biology major."
complaint = "insomnia worries"
"#;
        let p = SeekerProfile::from_toml_str(doc).unwrap();
        assert_eq!(p.profile.age, 21);
        assert_eq!(p.profile.gender, Gender::Female);
        assert!(p.style_constraints.is_empty());
        assert!(SeekerProfile::from_toml_str(&doc.replace("female", "robot")).is_err());
        assert!(SeekerProfile::from_toml_str(&doc.replace("\"s01\"", "\"../x\"")).is_err());
    }

    #[test]
    fn profile_render_mentions_structured_fields() {
        let r = profile().render();
        assert_eq!(r, "age 21, female, student, single. Lives in a dorm.");
    }

    #[test]
    fn logical_clock_ticks() {
        let c = LogicalClock::starting_at(0);
        assert_eq!(c.now().timestamp(), 0);
        assert_eq!(c.now().timestamp(), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn annotations() -> impl Strategy<Value = Annotations> {
            (
                prop::option::of("[a-z]{1,10}"),
                prop::option::of(0usize..10),
                any::<bool>(),
                prop::option::of(".{0,40}"),
            )
                .prop_map(|(e, c, r, m)| Annotations {
                    emotion: e.map(EmotionLabel::new),
                    complaint_stage: c,
                    retrieval_supplement: r,
                    reminder: m,
                })
        }

        proptest! {
            #[test]
            fn jsonl_roundtrip(texts in prop::collection::vec((".{0,80}", annotations()), 0..12)) {
                let utterances: Vec<Utterance> = texts
                    .into_iter()
                    .enumerate()
                    .map(|(i, (text, annotations))| Utterance {
                        turn_index: i,
                        speaker: if i % 2 == 0 { Speaker::Counselor } else { Speaker::Seeker },
                        session_id: "s".into(),
                        text,
                        annotations,
                    })
                    .collect();
                let encoded = utterances_to_jsonl(&utterances);
                let decoded = utterances_from_jsonl(&encoded).unwrap();
                prop_assert_eq!(&decoded, &utterances);
                prop_assert_eq!(utterances_to_jsonl(&decoded), encoded);
            }
        }
    }
}
