//! Chief-complaint elicitation.
//!
//! Before a session a chain of complaint stages is generated from the seeker
//! configuration and a recent event. During the session a recognizer is asked
//! at the end of every round whether the seeker has reached the current
//! stage; on "yes" the cursor moves one stage forward, clamped at the last.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::backend::{ChatBackend, ChatMessage};
use crate::domain::SeekerConfiguration;
use crate::error::{Error, Result};
use crate::memory::EventRecord;
use crate::prompt::TemplateSet;

pub const CHAIN_ATTEMPTS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplaintChain {
    stages: Vec<String>,
    cursor: usize,
    pub seeker_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_event: Option<String>,
}

impl ComplaintChain {
    pub fn new(seeker_id: impl Into<String>, stages: Vec<String>, source_event: Option<String>) -> Result<Self> {
        if stages.is_empty() || stages.iter().any(|s| s.trim().is_empty()) {
            return Err(Error::ChainParse { attempts: 0 });
        }
        Ok(ComplaintChain {
            stages,
            cursor: 0,
            seeker_id: seeker_id.into(),
            source_event,
        })
    }

    pub fn stages(&self) -> &[String] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn current(&self) -> &str {
        &self.stages[self.cursor]
    }

    /// Moves to the next stage, staying on the last one once reached.
    pub fn advance(&mut self) {
        self.cursor = (self.cursor + 1).min(self.stages.len() - 1);
    }

    /// Applies one recognition outcome.
    pub fn apply(&mut self, recognized: bool) {
        if recognized {
            self.advance();
        }
    }
}

/// Parses a numbered list (`1. stage`, `2) stage`) into stage texts.
/// Lines that are not numbered items are ignored.
pub fn parse_chain(text: &str) -> Option<Vec<String>> {
    let stages: Vec<String> = text
        .lines()
        .filter_map(|line| {
            let line = line.trim();
            let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
            if digits == 0 {
                return None;
            }
            let rest = line[digits..].strip_prefix(['.', ')'])?;
            let stage = rest.trim();
            (!stage.is_empty()).then(|| stage.to_string())
        })
        .collect();
    (!stages.is_empty()).then_some(stages)
}

pub async fn generate_chain(
    seeker_id: &str,
    cfg: &SeekerConfiguration,
    event: &EventRecord,
    templates: &TemplateSet,
    backend: &dyn ChatBackend,
) -> Result<ComplaintChain> {
    let mut slots: HashMap<&str, String> = HashMap::new();
    slots.insert("profile", cfg.profile().render());
    slots.insert("complaint", cfg.complaint().to_string());
    slots.insert("situation", cfg.situation().to_string());
    slots.insert("event", event.description.clone());

    for attempt in 0..CHAIN_ATTEMPTS {
        let template = if attempt == 0 {
            &templates.chain_generate
        } else {
            &templates.chain_retry
        };
        let prompt = template.render_with(&slots)?;
        let answer = backend.complete(&[ChatMessage::user(prompt.rendered)]).await?;
        if let Some(stages) = parse_chain(&answer) {
            return ComplaintChain::new(seeker_id, stages, Some(event.event_id.clone()));
        }
        tracing::debug!(attempt, "complaint chain output did not parse");
    }
    Err(Error::ChainParse {
        attempts: CHAIN_ATTEMPTS,
    })
}

/// Reads a yes/no answer. Anything else counts as "no".
pub fn parse_yes_no(text: &str) -> bool {
    let first = text
        .trim_start()
        .split(|c: char| !c.is_alphabetic())
        .next()
        .unwrap_or("");
    first.eq_ignore_ascii_case("yes")
}

/// Runs the recognizer on the completed round and advances the chain on a
/// "yes". Backend failures count as "not recognized". Returns whether the
/// stage was recognized.
pub async fn step_elicitation(
    chain: &mut ComplaintChain,
    round_text: &str,
    templates: &TemplateSet,
    recognizer: &dyn ChatBackend,
) -> Result<bool> {
    let mut slots: HashMap<&str, String> = HashMap::new();
    slots.insert("round", round_text.to_string());
    slots.insert("stage", chain.current().to_string());
    let prompt = templates.recognizer.render_with(&slots)?;
    let recognized = match recognizer.complete(&[ChatMessage::user(prompt.rendered)]).await {
        Ok(answer) => parse_yes_no(&answer),
        Err(Error::BackendUnavailable(msg)) => {
            tracing::warn!(%msg, "recognizer unavailable, treating as not recognized");
            false
        }
        Err(e) => return Err(e),
    };
    chain.apply(recognized);
    Ok(recognized)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;
    use crate::domain::{Gender, Profile, RelationshipStatus};
    use crate::memory::Applicability;

    fn cfg() -> SeekerConfiguration {
        SeekerConfiguration::new(Profile {
            age: 30,
            gender: Gender::Male,
            job: "engineer".into(),
            relationship_status: RelationshipStatus::Married,
            background: String::new(),
        })
        .with_complaint("feeling on edge")
        .with_situation("recently laid off")
    }

    fn event() -> EventRecord {
        EventRecord {
            event_id: "e1".into(),
            description: "lost job".into(),
            applicability: Applicability::any(),
        }
    }

    fn chain(n: usize) -> ComplaintChain {
        ComplaintChain::new("p", (0..n).map(|i| format!("stage {i}")).collect(), None).unwrap()
    }

    fn oracle(signals: &[bool], len: usize) -> Vec<usize> {
        let mut out = vec![0];
        let mut hits = 0;
        for &s in signals {
            hits += usize::from(s);
            out.push(hits.min(len - 1));
        }
        out
    }

    async fn run(signals: &[bool], len: usize) -> Vec<usize> {
        let answers: Vec<&str> = signals.iter().map(|&s| if s { "yes" } else { "no" }).collect();
        let recognizer = MockBackend::scripted(answers);
        let templates = TemplateSet::default();
        let mut c = chain(len);
        let mut out = vec![c.cursor()];
        for _ in signals {
            step_elicitation(&mut c, "round", &templates, &recognizer).await.unwrap();
            assert_eq!(c.current(), c.stages()[c.cursor()]);
            out.push(c.cursor());
        }
        out
    }

    #[tokio::test]
    async fn generates_three_stage_chain() {
        let b = MockBackend::scripted([
            "1. vague unease\n2. links unease to job loss\n3. recognizes avoidance pattern",
        ]);
        let c = generate_chain("p", &cfg(), &event(), &TemplateSet::default(), &b).await.unwrap();
        assert_eq!(
            c.stages(),
            ["vague unease", "links unease to job loss", "recognizes avoidance pattern"]
        );
        assert_eq!(c.cursor(), 0);
        assert_eq!(c.source_event.as_deref(), Some("e1"));
    }

    #[tokio::test]
    async fn empty_output_twice_is_a_parse_error() {
        let b = MockBackend::scripted(["", ""]);
        let err = generate_chain("p", &cfg(), &event(), &TemplateSet::default(), &b).await.unwrap_err();
        assert!(matches!(err, Error::ChainParse { attempts: 2 }));
        assert_eq!(b.call_count(), 2);
    }

    #[tokio::test]
    async fn retry_prompt_recovers() {
        let b = MockBackend::scripted(["Sure! Here you go.", "1. only stage"]);
        let c = generate_chain("p", &cfg(), &event(), &TemplateSet::default(), &b).await.unwrap();
        assert_eq!(c.len(), 1);
        assert!(b.calls()[1][0].content.contains("numbered list"));
    }

    #[tokio::test]
    async fn single_stage_chain() {
        let b = MockBackend::scripted(["1. just this"]);
        let c = generate_chain("p", &cfg(), &event(), &TemplateSet::default(), &b).await.unwrap();
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn parser_edge_cases() {
        assert_eq!(parse_chain("1) a\n  2.  b  \nnot an item\n3.\n10. c"), Some(vec!["a".into(), "b".into(), "c".into()]));
        assert_eq!(parse_chain("a\nb"), None);
        assert_eq!(parse_chain(""), None);
    }

    #[tokio::test]
    async fn never_recognized_stays_put() {
        assert_eq!(run(&[false; 10], 3).await, vec![0; 11]);
    }

    #[tokio::test]
    async fn recognized_on_rounds_two_and_five() {
        let signals = [false, true, false, false, true];
        assert_eq!(run(&signals, 3).await, vec![0, 0, 1, 1, 1, 2]);
    }

    #[tokio::test]
    async fn always_recognized_clamps() {
        assert_eq!(run(&[true; 6], 3).await, vec![0, 1, 2, 2, 2, 2, 2]);
    }

    #[tokio::test]
    async fn unavailable_recognizer_counts_as_no() {
        let b = MockBackend::failing();
        let mut c = chain(3);
        let got = step_elicitation(&mut c, "r", &TemplateSet::default(), &b).await.unwrap();
        assert!(!got);
        assert_eq!(c.cursor(), 0);
    }

    #[test]
    fn yes_no_parsing() {
        assert!(parse_yes_no("Yes."));
        assert!(parse_yes_no("  yes, they did"));
        assert!(!parse_yes_no("No"));
        assert!(!parse_yes_no("yesterday"));
        assert!(!parse_yes_no(""));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cursor_is_clamped_prefix_sum(signals in prop::collection::vec(any::<bool>(), 0..50), len in 1usize..9) {
                let mut c = chain(len);
                let mut got = vec![c.cursor()];
                for &s in &signals {
                    c.apply(s);
                    got.push(c.cursor());
                }
                prop_assert_eq!(got, oracle(&signals, len));
            }
        }
    }
}
