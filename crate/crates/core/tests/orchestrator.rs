mod common;

use std::sync::Arc;

use common::{config, engine, engine_with, profile, Mocks};
use seekersim_core::backend::{ChatRole, MockBackend};
use seekersim_core::config::AblationFlags;
use seekersim_core::domain::{SessionTranscript, Speaker};
use seekersim_core::memory::MemoryStore;
use seekersim_core::orchestrator::{open_session, open_session_with_flags, run_simulation, Engine, StopRule};
use seekersim_core::Error;

fn seeker_turns(t: &SessionTranscript) -> Vec<&seekersim_core::domain::Utterance> {
    t.utterances.iter().filter(|u| u.speaker == Speaker::Seeker).collect()
}

#[tokio::test]
async fn fresh_session_has_every_slot_filled() {
    let mocks = Mocks::new();
    let rt = open_session(engine(&mocks), &profile(), MemoryStore::new("ana")).await.unwrap();
    for (name, value) in rt.cfg().slots() {
        assert!(!value.trim().is_empty(), "slot {name} empty");
    }
    assert_eq!(rt.chain().cursor(), 0);
    assert_eq!(rt.chain().len(), 3);
    assert_eq!(rt.cfg().complaint(), "I just feel tired all the time");
    assert_eq!(rt.cfg().emotion().as_str(), "neutral");
    assert!(rt.cfg().situation().contains("failed an exam"));
    assert_eq!(rt.session_id(), "ana-s001");
    assert!(rt.transcript().utterances.is_empty());
    assert_eq!(rt.transcript().meta.scale_records.len(), 3);
    assert_eq!(rt.transcript().meta.template_id.as_deref(), Some("default/seeker_system"));
    for (_, value) in rt.cfg().slots() {
        assert!(rt.system_prompt().contains(&value));
    }
}

#[tokio::test]
async fn open_fails_without_matching_event() {
    let mocks = Mocks::new();
    let mut p = profile();
    p.profile.job = "pilot".into();
    let err = open_session(engine(&mocks), &p, MemoryStore::new("ana")).await.unwrap_err();
    assert!(matches!(err.root(), Error::NoMatchingEvent), "{err}");
    assert!(err.to_string().contains("event"), "{err}");
}

#[tokio::test]
async fn second_session_status_reports_scale_delta() {
    let mocks = Mocks {
        // 7 placeholder items per session: all "1" first, then all "2"
        scales: Arc::new(MockBackend::cycling(
            std::iter::repeat_n("1", 7).chain(std::iter::repeat_n("2", 7)),
        )),
        ..Mocks::new()
    };
    let engine = engine(&mocks);
    let rt = open_session(engine.clone(), &profile(), MemoryStore::new("ana")).await.unwrap();
    assert!(rt.cfg().status().contains("mood: total 3 (first assessment)"), "{}", rt.cfg().status());
    let (_, memory) = rt.close(None).unwrap();

    let rt = open_session(engine, &profile(), memory).await.unwrap();
    assert_eq!(rt.session_id(), "ana-s002");
    let status = rt.cfg().status();
    assert!(status.contains("mood: total 6 (previous 3, change +3, worsening)"), "{status}");
    let prompt = &mocks.summarizer.calls()[2][0].content;
    assert!(prompt.contains("change +3, worsening"), "{prompt}");
}

#[tokio::test]
async fn initial_emotion_comes_from_prior_report() {
    let mocks = Mocks::new();
    let engine = engine(&mocks);
    let rt = open_session(engine.clone(), &profile(), MemoryStore::new("ana")).await.unwrap();
    let (_, memory) = rt.close(Some("Client left the session in visible grief.".into())).unwrap();
    let rt = open_session(engine.clone(), &profile(), memory).await.unwrap();
    assert_eq!(rt.cfg().emotion().as_str(), "grief");

    let mut p = profile();
    p.initial_emotion = Some("nervousness".into());
    let rt = open_session(engine, &p, MemoryStore::new("ana")).await.unwrap();
    assert_eq!(rt.cfg().emotion().as_str(), "nervousness");
}

#[tokio::test]
async fn reminder_tracks_emotion_and_previous_round_cursor() {
    let mocks = Mocks {
        inferencer: Arc::new(MockBackend::cycling(["neutral"])),
        recognizer: Arc::new(MockBackend::cycling(["yes", "no", "yes"])),
        ..Mocks::new()
    };
    let mut cfg = config();
    // effectively pins the perturbation to the base group ({neutral})
    cfg.perturbation.weight_decay = 1e-300;
    let mut rt = open_session(engine_with(&mocks, cfg), &profile(), MemoryStore::new("ana"))
        .await
        .unwrap();
    let stages = rt.chain().stages().to_vec();
    for (round, expected) in [0usize, 1, 1, 2, 2].into_iter().enumerate() {
        let u = rt.seeker_reply(&format!("question {round}")).await.unwrap();
        assert_eq!(u.annotations.complaint_stage, Some(expected), "round {round}");
        let reminder = u.annotations.reminder.as_deref().unwrap();
        assert!(reminder.contains(&stages[expected]), "round {round}: {reminder}");
        assert!(reminder.contains("neutral"));
        assert_eq!(u.annotations.emotion.as_ref().unwrap().as_str(), "neutral");
        // the generator saw the reminder as its last message
        let call = mocks.seeker.last_call().unwrap();
        let last = call.last().unwrap();
        assert_eq!(last.role, ChatRole::System);
        assert_eq!(last.content, reminder);
    }
}

#[tokio::test]
async fn reminder_emotion_is_the_perturbed_one() {
    let mocks = Mocks::new();
    let mut rt = open_session(engine(&mocks), &profile(), MemoryStore::new("ana")).await.unwrap();
    for i in 0..8 {
        let u = rt.seeker_reply(&format!("q{i}")).await.unwrap();
        let emotion = u.annotations.emotion.clone().unwrap();
        assert!(u.annotations.reminder.as_deref().unwrap().contains(emotion.as_str()));
        assert_eq!(rt.cfg().emotion(), &emotion);
    }
}

#[tokio::test]
async fn dynamic_evolution_off_freezes_emotion_and_cursor() {
    let mocks = Mocks {
        recognizer: Arc::new(MockBackend::cycling(["yes"])),
        ..Mocks::new()
    };
    let flags = AblationFlags {
        dynamic_evolution: false,
        long_term_memory: true,
    };
    let mut rt = open_session_with_flags(engine(&mocks), &profile(), MemoryStore::new("ana"), flags)
        .await
        .unwrap();
    for i in 0..10 {
        rt.seeker_reply(&format!("q{i}")).await.unwrap();
    }
    let t = rt.transcript();
    assert_eq!(seeker_turns(t).len(), 10);
    for u in seeker_turns(t) {
        assert_eq!(u.annotations.emotion.as_ref().unwrap().as_str(), "neutral");
        assert_eq!(u.annotations.complaint_stage, Some(0));
    }
    assert_eq!(mocks.inferencer.call_count(), 0);
    assert_eq!(mocks.recognizer.call_count(), 0);
}

async fn session_one(engine: Arc<Engine>, lines: &[&str]) -> MemoryStore {
    let mut rt = open_session(engine, &profile(), MemoryStore::new("ana")).await.unwrap();
    for l in lines {
        rt.seeker_reply(l).await.unwrap();
    }
    rt.close(None).unwrap().1
}

#[tokio::test]
async fn gate_yes_puts_retrieved_chunk_into_this_rounds_reminder() {
    let mocks = Mocks {
        seeker: Arc::new(MockBackend::cycling([
            "My roommate plays loud guitar every night.",
            "I started a sleep diary with lavender tea.",
            "Fine I guess.",
        ])),
        gate: Arc::new(MockBackend::always("no").with_rule("last session", "yes")),
        ..Mocks::new()
    };
    let engine = engine(&mocks);
    let memory = session_one(engine.clone(), &["How are things at home?", "What helps you relax?"]).await;

    let mut rt = open_session(engine, &profile(), memory).await.unwrap();
    let u = rt
        .seeker_reply("Last session you mentioned a sleep diary and lavender tea. Did you keep it?")
        .await
        .unwrap();
    assert!(u.annotations.retrieval_supplement);
    let reminder = u.annotations.reminder.unwrap();
    assert!(reminder.contains("I started a sleep diary with lavender tea."), "{reminder}");
    // the chunk is supplied to the generator for this turn only
    let u = rt.seeker_reply("And how is your week going?").await.unwrap();
    assert!(!u.annotations.retrieval_supplement);
    assert!(!u.annotations.reminder.unwrap().contains("lavender"));
}

#[tokio::test]
async fn retrieval_never_sees_the_live_session() {
    let mocks = Mocks {
        seeker: Arc::new(MockBackend::cycling(["Lavender tea helps me sleep."])),
        gate: Arc::new(MockBackend::always("yes")),
        ..Mocks::new()
    };
    let mut rt = open_session(engine(&mocks), &profile(), MemoryStore::new("ana")).await.unwrap();
    rt.seeker_reply("Tell me about lavender tea").await.unwrap();
    let u = rt.seeker_reply("So lavender tea helps you sleep?").await.unwrap();
    assert!(!u.annotations.retrieval_supplement);
    // empty archive: the gate is not even consulted
    assert_eq!(mocks.gate.call_count(), 0);
}

async fn second_session_jsonl(archive_lines: [&str; 2], flags: AblationFlags) -> String {
    let mocks = Mocks {
        gate: Arc::new(MockBackend::always("yes")),
        ..Mocks::new()
    };
    let engine = engine(&mocks);
    let seeded = Mocks {
        seeker: Arc::new(MockBackend::cycling(archive_lines)),
        ..Mocks::new()
    };
    let memory = session_one(engine_with(&seeded, config()), &["first question about tea", "second about sleep"]).await;
    let mut rt = open_session_with_flags(engine, &profile(), memory, flags).await.unwrap();
    for q in ["Last session we talked about tea and sleep.", "How is the tea?", "Anything else?"] {
        rt.seeker_reply(q).await.unwrap();
    }
    rt.transcript().utterances_to_jsonl()
}

#[tokio::test]
async fn without_long_term_memory_transcript_ignores_archive() {
    let off = AblationFlags {
        dynamic_evolution: true,
        long_term_memory: false,
    };
    let a = second_session_jsonl(["tea keeps me awake", "sleep is bad"], off).await;
    let b = second_session_jsonl(["my cat is called Miso", "I like hiking"], off).await;
    assert_eq!(a, b);

    let on = AblationFlags::default();
    let a = second_session_jsonl(["tea keeps me awake", "sleep is bad"], on).await;
    let b = second_session_jsonl(["my cat is called Miso", "I like hiking"], on).await;
    assert_ne!(a, b, "with memory on the archive should reach the reminder");
}

#[tokio::test]
async fn failed_round_leaves_only_the_counselor_line_and_can_be_retried() {
    let mocks = Mocks {
        seeker: Arc::new(MockBackend::scripted(["one", "!fail", "!fail", "three"])),
        ..Mocks::new()
    };
    let mut cfg = config();
    cfg.budgets.round_timeout_secs = 5.0;
    let mut rt = open_session(engine_with(&mocks, cfg), &profile(), MemoryStore::new("ana"))
        .await
        .unwrap();
    rt.seeker_reply("first").await.unwrap();
    let emotion = rt.cfg().emotion().clone();
    let err = rt.seeker_reply("second").await.unwrap_err();
    assert!(matches!(err.root(), Error::BackendUnavailable(_)), "{err}");
    assert_eq!(rt.transcript().utterances.len(), 3);
    assert_eq!(rt.transcript().utterances[2].speaker, Speaker::Counselor);
    assert_eq!(rt.cfg().emotion(), &emotion);
    assert_eq!(rt.pending(), Some("second"));

    assert!(matches!(rt.seeker_reply("different").await, Err(Error::InvalidState(_))));
    assert!(rt.seeker_reply("second").await.is_err());
    let u = rt.seeker_reply("second").await.unwrap();
    assert_eq!(u.text, "three");
    assert_eq!(rt.transcript().utterances.len(), 4);
    assert!(rt.pending().is_none());
}

#[tokio::test]
async fn simulation_alternates_from_the_counselor() {
    let mocks = Mocks::new();
    let counselor = MockBackend::cycling(["Counselor asks {call}"]);
    let rt = open_session(engine(&mocks), &profile(), MemoryStore::new("ana")).await.unwrap();
    let out = run_simulation(&counselor, rt, 3, &StopRule::EndToken("[END]".into())).await.unwrap();
    assert!(out.complete);
    assert_eq!(out.rounds, 3);
    let t = &out.transcript;
    assert_eq!(t.utterances.len(), 6);
    for u in &t.utterances {
        let expected = if u.turn_index % 2 == 0 { Speaker::Counselor } else { Speaker::Seeker };
        assert_eq!(u.speaker, expected);
        if u.speaker == Speaker::Seeker {
            assert!(u.annotations.emotion.is_some());
            assert!(u.annotations.complaint_stage.is_some());
        }
    }
    assert!(!t.is_open());
    assert_eq!(out.memory.archive().len(), 1);
    // counselor context: the seeker's lines arrive as user turns
    let last = counselor.last_call().unwrap();
    assert_eq!(last.last().unwrap().role, ChatRole::User);
}

#[tokio::test]
async fn end_token_closes_early_as_complete() {
    let mocks = Mocks::new();
    let counselor = MockBackend::scripted(["How are you?", "Let's stop here for today. [END]"]);
    let rt = open_session(engine(&mocks), &profile(), MemoryStore::new("ana")).await.unwrap();
    let out = run_simulation(&counselor, rt, 10, &StopRule::EndToken("[END]".into())).await.unwrap();
    assert!(out.complete);
    assert_eq!(out.rounds, 1);
    let t = &out.transcript;
    assert_eq!(t.utterances.len(), 3);
    assert_eq!(t.utterances[2].text, "Let's stop here for today.");
    assert!(!t.meta.incomplete);
}

#[tokio::test]
async fn seeker_failure_yields_incomplete_transcript() {
    let mocks = Mocks {
        seeker: Arc::new(MockBackend::scripted(["fine"])),
        ..Mocks::new()
    };
    let counselor = MockBackend::cycling(["q{call}"]);
    let rt = open_session(engine(&mocks), &profile(), MemoryStore::new("ana")).await.unwrap();
    let out = run_simulation(&counselor, rt, 5, &StopRule::MaxRoundsOnly).await.unwrap();
    assert!(!out.complete);
    assert_eq!(out.rounds, 1);
    assert!(out.transcript.meta.incomplete);
    assert!(out.failure.is_some());
    assert!(!out.transcript.is_open());
}

#[tokio::test]
async fn zero_rounds_is_rejected() {
    let mocks = Mocks::new();
    let rt = open_session(engine(&mocks), &profile(), MemoryStore::new("ana")).await.unwrap();
    let counselor = MockBackend::always("hi");
    assert!(run_simulation(&counselor, rt, 0, &StopRule::MaxRoundsOnly).await.is_err());
}

async fn golden_run() -> Vec<String> {
    let mocks = Mocks {
        inferencer: Arc::new(MockBackend::cycling(["sadness", "fear", "neutral", "joy"])),
        recognizer: Arc::new(MockBackend::cycling(["no", "yes"])),
        ..Mocks::new()
    };
    let engine = engine(&mocks);
    let counselor = MockBackend::cycling(["Counselor turn {call}"]);
    let mut memory = MemoryStore::new("ana");
    let mut out = Vec::new();
    for _ in 0..2 {
        let rt = open_session(engine.clone(), &profile(), memory).await.unwrap();
        let o = run_simulation(&counselor, rt, 5, &StopRule::MaxRoundsOnly).await.unwrap();
        out.push(serde_json::to_string(&o.transcript).unwrap());
        memory = o.memory;
    }
    out
}

#[tokio::test]
async fn seeded_runs_are_byte_identical() {
    let a = golden_run().await;
    let b = golden_run().await;
    assert_eq!(a, b);
}
