use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendRole, ChatBackend, ChatMessage};
use crate::config::AblationFlags;
use crate::domain::{SeekerProfile, SessionTranscript};
use crate::error::{Error, Result};
use crate::memory::MemoryStore;
use crate::orchestrator::{open_session_with_flags, Engine, SessionRuntime};
use crate::prompt::{PromptTemplate, TemplateSet};

use super::QuestionBank;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub question: String,
    pub answer: String,
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub mean: f64,
    pub per_question: Vec<QuestionScore>,
}

impl JudgeScore {
    fn from_scores(per_question: Vec<QuestionScore>) -> Self {
        let mean = per_question.iter().map(|q| f64::from(q.score)).sum::<f64>() / per_question.len() as f64;
        JudgeScore { mean, per_question }
    }

    /// Pools the per-question scores of several interviews.
    pub fn merge(scores: Vec<JudgeScore>) -> Option<JudgeScore> {
        let all: Vec<QuestionScore> = scores.into_iter().flat_map(|s| s.per_question).collect();
        (!all.is_empty()).then(|| JudgeScore::from_scores(all))
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.mean.is_finite()
            && (1.0..=5.0).contains(&self.mean)
            && self.per_question.iter().all(|q| (1..=5).contains(&q.score));
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidState("judge score outside 1..=5".into()))
        }
    }
}

/// Memory probe scores with long-term memory on and off, each arm run on a
/// fresh engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtmArms {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub with_memory: Option<JudgeScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub without_memory: Option<JudgeScore>,
}

/// First integer in the reply, if it lies in 1..=5.
pub fn parse_judge_score(text: &str) -> Option<u8> {
    let digits: String = text
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    digits.parse::<u8>().ok().filter(|n| (1..=5).contains(n))
}

async fn judge_once(judge: &dyn ChatBackend, templates: &TemplateSet, prompt: String) -> Result<u8> {
    let mut messages = vec![ChatMessage::user(prompt)];
    let first = judge.complete(&messages).await?;
    if let Some(s) = parse_judge_score(&first) {
        return Ok(s);
    }
    messages.push(ChatMessage::assistant(first));
    messages.push(ChatMessage::user(templates.judge_retry.render_with(&HashMap::new())?.rendered));
    let second = judge.complete(&messages).await?;
    parse_judge_score(&second).ok_or_else(|| Error::JudgeParse(second.trim().to_string()))
}

async fn interview(
    runtime: &mut SessionRuntime,
    bank: &QuestionBank,
    judge: &dyn ChatBackend,
    template: &PromptTemplate,
    context_slot: (&'static str, String),
) -> Result<JudgeScore> {
    if bank.is_empty() {
        return Err(Error::EmptyCorpus("question bank".into()));
    }
    let engine = runtime.engine().clone();
    let mut scores = Vec::with_capacity(bank.questions.len());
    for question in &bank.questions {
        let answer = runtime.seeker_reply(question).await?.text;
        let mut slots: HashMap<&str, String> = HashMap::new();
        slots.insert(context_slot.0, context_slot.1.clone());
        slots.insert("question", question.clone());
        slots.insert("answer", answer.clone());
        let prompt = template.render_with(&slots)?.rendered;
        let score = judge_once(judge, engine.templates(), prompt).await?;
        scores.push(QuestionScore {
            question: question.clone(),
            answer,
            score,
        });
    }
    Ok(JudgeScore::from_scores(scores))
}

/// Interviews the seeker and has the judge rate each answer's consistency
/// with the configured profile.
pub async fn personality_fidelity(
    runtime: &mut SessionRuntime,
    bank: &QuestionBank,
    judge: &dyn ChatBackend,
) -> Result<JudgeScore> {
    let engine = runtime.engine().clone();
    let profile = runtime.cfg().profile().render();
    interview(runtime, bank, judge, &engine.templates().judge_fidelity, ("profile", profile)).await
}

fn previous_session_record(s: &SessionTranscript) -> String {
    let mut out = s.render_text();
    for r in &s.meta.scale_records {
        out.push('\n');
        out.push_str(&r.render());
    }
    out
}

/// Asks about the previous session and has the judge check the answers
/// against what was actually said.
pub async fn ltm_probe(runtime: &mut SessionRuntime, bank: &QuestionBank, judge: &dyn ChatBackend) -> Result<JudgeScore> {
    let previous = runtime
        .memory()
        .last_archived()
        .map(previous_session_record)
        .ok_or(Error::NoArchivedSession)?;
    let engine = runtime.engine().clone();
    interview(
        runtime,
        bank,
        judge,
        &engine.templates().judge_memory,
        ("previous_session", previous),
    )
    .await
}

/// Runs the memory probe twice on the same archive, once with long-term
/// memory and once without. `make_engine` is called per arm so scripted
/// backends start from the same state.
pub async fn ltm_ablation<F>(
    make_engine: F,
    profile: &SeekerProfile,
    archive: &[SessionTranscript],
    bank: &QuestionBank,
) -> Result<LtmArms>
where
    F: Fn() -> Result<Arc<Engine>>,
{
    if archive.is_empty() {
        return Err(Error::NoArchivedSession);
    }
    let mut arms = LtmArms {
        with_memory: None,
        without_memory: None,
    };
    for long_term_memory in [true, false] {
        let engine = make_engine()?;
        let flags = AblationFlags {
            long_term_memory,
            ..engine.config().ablation
        };
        let memory = MemoryStore::with_archive(profile.id.clone(), archive.to_vec())?;
        let mut rt = open_session_with_flags(engine.clone(), profile, memory, flags).await?;
        let score = ltm_probe(&mut rt, bank, engine.backends().get(BackendRole::Judge)).await?;
        if long_term_memory {
            arms.with_memory = Some(score);
        } else {
            arms.without_memory = Some(score);
        }
    }
    Ok(arms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn judge_score_parsing() {
        assert_eq!(parse_judge_score("4"), Some(4));
        assert_eq!(parse_judge_score("Score: 5/5"), Some(5));
        assert_eq!(parse_judge_score("10"), None);
        assert_eq!(parse_judge_score("0"), None);
        assert_eq!(parse_judge_score("great"), None);
    }

    #[test]
    fn merge_pools_questions() {
        let q = |score| QuestionScore {
            question: "q".into(),
            answer: "a".into(),
            score,
        };
        let a = JudgeScore::from_scores(vec![q(5), q(3)]);
        let b = JudgeScore::from_scores(vec![q(1)]);
        assert_eq!(JudgeScore::merge(vec![a, b]).unwrap().mean, 3.0);
        assert!(JudgeScore::merge(vec![]).is_none());
    }
}
