use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::domain::{Gender, Profile, RelationshipStatus};
use crate::error::{Error, Result};

/// Either `"*"` (anything) or an explicit list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector<T> {
    Any,
    Only(Vec<T>),
}

impl<T> Selector<T> {
    pub fn is_any(&self) -> bool {
        matches!(self, Selector::Any)
    }

    pub fn matches_by(&self, f: impl Fn(&T) -> bool) -> bool {
        match self {
            Selector::Any => true,
            Selector::Only(v) => v.iter().any(f),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SelectorRepr<T> {
    Star(String),
    List(Vec<T>),
}

impl<T: Serialize> Serialize for Selector<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Selector::Any => s.serialize_str("*"),
            Selector::Only(v) => v.serialize(s),
        }
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Selector<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match SelectorRepr::<T>::deserialize(d)? {
            SelectorRepr::Star(s) if s == "*" => Ok(Selector::Any),
            SelectorRepr::Star(s) => Err(serde::de::Error::custom(format!(
                "expected \"*\" or a list, got {s:?}"
            ))),
            SelectorRepr::List(v) => Ok(Selector::Only(v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Applicability {
    pub age_range: [u32; 2],
    pub genders: Selector<Gender>,
    pub jobs: Selector<String>,
    pub relationship_statuses: Selector<RelationshipStatus>,
}

impl Applicability {
    pub fn any() -> Self {
        Applicability {
            age_range: [0, 150],
            genders: Selector::Any,
            jobs: Selector::Any,
            relationship_statuses: Selector::Any,
        }
    }

    pub fn matches(&self, p: &Profile) -> bool {
        let [lo, hi] = self.age_range;
        (lo..=hi).contains(&p.age) && self.matches_ignoring_age(p)
    }

    fn matches_ignoring_age(&self, p: &Profile) -> bool {
        let job = p.job.trim().to_lowercase();
        self.genders.matches_by(|g| *g == p.gender)
            && self.jobs.matches_by(|j| j.trim().to_lowercase() == job)
            && self
                .relationship_statuses
                .matches_by(|r| *r == p.relationship_status)
    }

    /// No gender, job or relationship restriction.
    pub fn is_wildcard_only(&self) -> bool {
        self.genders.is_any() && self.jobs.is_any() && self.relationship_statuses.is_any()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_id: String,
    pub description: String,
    pub applicability: Applicability,
}

impl EventRecord {
    pub fn validate(&self) -> Result<()> {
        if self.event_id.trim().is_empty() {
            return Err(Error::Config("event with empty id".into()));
        }
        if self.description.trim().is_empty() {
            return Err(Error::Config(format!("event `{}` has no description", self.event_id)));
        }
        let [lo, hi] = self.applicability.age_range;
        if lo > hi {
            return Err(Error::Config(format!(
                "event `{}` has age range {lo} > {hi}",
                self.event_id
            )));
        }
        Ok(())
    }
}

/// Reads a line-delimited event corpus.
pub fn load_event_corpus(path: impl AsRef<Path>) -> Result<Vec<EventRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_event_corpus(&text).map_err(|e| Error::format(path, e))
}

pub(crate) fn parse_event_corpus(text: &str) -> Result<Vec<EventRecord>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ev: EventRecord = serde_json::from_str(line)
            .map_err(|e| Error::Config(format!("event corpus line {}: {e}", n + 1)))?;
        ev.validate()?;
        out.push(ev);
    }
    Ok(out)
}

/// Picks uniformly among the events whose applicability matches the profile.
/// With no match, falls back to events without gender/job/relationship
/// restrictions regardless of age.
pub fn sample_event<'a>(profile: &Profile, corpus: &'a [EventRecord], seed: u64) -> Result<&'a EventRecord> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus("event corpus".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matched: Vec<&EventRecord> = corpus
        .iter()
        .filter(|e| e.applicability.matches(profile))
        .collect();
    if let Some(e) = matched.choose(&mut rng) {
        return Ok(e);
    }
    let fallback: Vec<&EventRecord> = corpus
        .iter()
        .filter(|e| e.applicability.is_wildcard_only())
        .collect();
    fallback.choose(&mut rng).copied().ok_or(Error::NoMatchingEvent)
}
