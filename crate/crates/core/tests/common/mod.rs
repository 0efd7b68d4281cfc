#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use seekersim_core::backend::{BackendRole, BackendSet, ChatBackend, MockBackend};
use seekersim_core::config::{ClockKind, RuntimeConfig};
use seekersim_core::domain::{Gender, Profile, RelationshipStatus, SeekerProfile};
use seekersim_core::memory::{Applicability, EventRecord, Selector};
use seekersim_core::orchestrator::Engine;

pub const CHAIN: &str = "1. I just feel tired all the time\n2. The tiredness started after the exam\n3. I avoid studying because I fear failing again";

pub struct Mocks {
    pub seeker: Arc<MockBackend>,
    pub inferencer: Arc<MockBackend>,
    pub chain: Arc<MockBackend>,
    pub recognizer: Arc<MockBackend>,
    pub gate: Arc<MockBackend>,
    pub scales: Arc<MockBackend>,
    pub summarizer: Arc<MockBackend>,
    pub judge: Arc<MockBackend>,
}

impl Mocks {
    pub fn new() -> Self {
        Mocks {
            seeker: Arc::new(MockBackend::cycling(["seeker line {call}"]).with_id("seeker")),
            inferencer: Arc::new(MockBackend::cycling(["sadness"]).with_id("inferencer")),
            chain: Arc::new(MockBackend::cycling([CHAIN]).with_id("chain")),
            recognizer: Arc::new(MockBackend::cycling(["no"]).with_id("recognizer")),
            gate: Arc::new(MockBackend::cycling(["no"]).with_id("gate")),
            scales: Arc::new(MockBackend::cycling(["1"]).with_id("scales")),
            summarizer: Arc::new(
                MockBackend::cycling(["You sleep badly.", "You live in a dorm."]).with_id("summarizer"),
            ),
            judge: Arc::new(MockBackend::cycling(["4"]).with_id("judge")),
        }
    }

    pub fn set(&self) -> BackendSet {
        let b = |m: &Arc<MockBackend>| m.clone() as Arc<dyn ChatBackend>;
        let map: BTreeMap<BackendRole, Arc<dyn ChatBackend>> = [
            (BackendRole::SeekerGenerator, b(&self.seeker)),
            (BackendRole::EmotionInferencer, b(&self.inferencer)),
            (BackendRole::ChainGenerator, b(&self.chain)),
            (BackendRole::Recognizer, b(&self.recognizer)),
            (BackendRole::QuerierGate, b(&self.gate)),
            (BackendRole::ScaleFiller, b(&self.scales)),
            (BackendRole::Summarizer, b(&self.summarizer)),
            (BackendRole::Judge, b(&self.judge)),
        ]
        .into_iter()
        .collect();
        BackendSet::new(map).unwrap()
    }
}

pub fn profile() -> SeekerProfile {
    SeekerProfile {
        id: "ana".into(),
        profile: Profile {
            age: 21,
            gender: Gender::Female,
            job: "student".into(),
            relationship_status: RelationshipStatus::Single,
            background: "Second-year biology student.".into(),
        },
        complaint: "can't sleep before exams".into(),
        style_constraints: Vec::new(),
        initial_emotion: None,
    }
}

pub fn events() -> Vec<EventRecord> {
    vec![EventRecord {
        event_id: "exam".into(),
        description: "failed an exam".into(),
        applicability: Applicability {
            age_range: [16, 30],
            genders: Selector::Any,
            jobs: Selector::Only(vec!["student".into()]),
            relationship_statuses: Selector::Any,
        },
    }]
}

pub fn config() -> RuntimeConfig {
    RuntimeConfig {
        seed: 11,
        clock: ClockKind::Logical,
        ..RuntimeConfig::default()
    }
}

pub fn engine_with(mocks: &Mocks, cfg: RuntimeConfig) -> Arc<Engine> {
    Arc::new(Engine::builder(cfg).backends(mocks.set()).events(events()).build().unwrap())
}

pub fn engine(mocks: &Mocks) -> Arc<Engine> {
    engine_with(mocks, config())
}

