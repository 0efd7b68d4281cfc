use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Clock, SessionTranscript};
use crate::error::{Error, Result};

use super::event::EventRecord;
use super::retrieval::RetrievalIndex;
use super::scale::ScaleRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortTermMemory {
    pub scale_records: Vec<ScaleRecord>,
    pub event: EventRecord,
    pub status_summary: String,
    pub situation_summary: String,
}

/// Memory of one seeker across sessions.
///
/// Every utterance lives in exactly one tier: the open session's transcript
/// (real-time) or the archive of closed sessions (long-term). Only the
/// archive is indexed for retrieval.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryStore {
    seeker_id: String,
    realtime: Option<SessionTranscript>,
    shortterm: Option<ShortTermMemory>,
    archive: Vec<SessionTranscript>,
    index: RetrievalIndex,
}

impl MemoryStore {
    pub fn new(seeker_id: impl Into<String>) -> Self {
        MemoryStore {
            seeker_id: seeker_id.into(),
            realtime: None,
            shortterm: None,
            archive: Vec::new(),
            index: RetrievalIndex::default(),
        }
    }

    /// Seeds the long-term tier with previously closed sessions.
    pub fn with_archive(seeker_id: impl Into<String>, sessions: Vec<SessionTranscript>) -> Result<Self> {
        let mut store = Self::new(seeker_id);
        for s in sessions {
            store.archive_session(s)?;
        }
        Ok(store)
    }

    /// Loads `<root>/<seeker_id>/`, skipping sessions that were never closed.
    pub fn load(root: &Path, seeker_id: &str) -> Result<Self> {
        let sessions = SessionTranscript::load_dir(&root.join(seeker_id))?
            .into_iter()
            .filter(|s| !s.is_open())
            .collect();
        Self::with_archive(seeker_id, sessions)
    }

    fn archive_session(&mut self, session: SessionTranscript) -> Result<()> {
        if session.is_open() {
            return Err(Error::InvalidState(format!(
                "session {} is still open and cannot be archived",
                session.session_id()
            )));
        }
        if session.seeker_id() != self.seeker_id {
            return Err(Error::InvalidState(format!(
                "session {} belongs to seeker {}, not {}",
                session.session_id(),
                session.seeker_id(),
                self.seeker_id
            )));
        }
        if self.archive.iter().any(|s| s.session_id() == session.session_id()) {
            return Err(Error::InvalidState(format!(
                "session {} is already archived",
                session.session_id()
            )));
        }
        self.index.add_session(&session);
        self.archive.push(session);
        Ok(())
    }

    pub fn seeker_id(&self) -> &str {
        &self.seeker_id
    }

    pub fn open(&mut self, transcript: SessionTranscript) -> Result<()> {
        if self.realtime.is_some() {
            return Err(Error::SessionAlreadyOpen);
        }
        if !transcript.is_open() || transcript.seeker_id() != self.seeker_id {
            return Err(Error::InvalidState(
                "can only open an unclosed transcript of this seeker".into(),
            ));
        }
        self.realtime = Some(transcript);
        Ok(())
    }

    pub fn set_shortterm(&mut self, memory: ShortTermMemory) {
        self.shortterm = Some(memory);
    }

    pub fn shortterm(&self) -> Option<&ShortTermMemory> {
        self.shortterm.as_ref()
    }

    pub fn realtime(&self) -> Option<&SessionTranscript> {
        self.realtime.as_ref()
    }

    pub fn realtime_mut(&mut self) -> Option<&mut SessionTranscript> {
        self.realtime.as_mut()
    }

    pub fn archive(&self) -> &[SessionTranscript] {
        &self.archive
    }

    pub fn last_archived(&self) -> Option<&SessionTranscript> {
        self.archive.last()
    }

    pub fn index(&self) -> &RetrievalIndex {
        &self.index
    }

    /// Next session number, counting archived sessions.
    pub fn next_session_number(&self) -> usize {
        self.archive.len() + usize::from(self.realtime.is_some()) + 1
    }

    /// Stamps the open session closed and moves it, with its scale records,
    /// into the long-term archive. Short-term memory is cleared.
    pub fn close_session(&mut self, clock: &dyn Clock) -> Result<&SessionTranscript> {
        let mut session = self.realtime.take().ok_or(Error::NoOpenSession)?;
        if let Some(st) = self.shortterm.take() {
            if session.meta.scale_records.is_empty() {
                session.meta.scale_records = st.scale_records;
            }
        }
        session.meta.closed_at = Some(clock.now());
        self.archive_session(session)?;
        Ok(self.archive.last().expect("just archived"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;
    use crate::domain::{Annotations, LogicalClock, Speaker};
    use crate::memory::{query_long_term, LexicalScorer};
    use crate::prompt::TemplateSet;

    fn open_with(store: &mut MemoryStore, clock: &LogicalClock, texts: &[&str]) {
        let n = store.next_session_number();
        let mut t = SessionTranscript::new(format!("p-s{n:03}"), "p", clock.now());
        for (i, text) in texts.iter().enumerate() {
            let s = if i % 2 == 0 { Speaker::Counselor } else { Speaker::Seeker };
            t.push(s, *text, Annotations::default()).unwrap();
        }
        store.open(t).unwrap();
    }

    #[test]
    fn close_moves_session_to_archive() {
        let clock = LogicalClock::default();
        let mut store = MemoryStore::new("p");
        open_with(&mut store, &clock, &["a", "b", "c", "d"]);
        assert!(store.close_session(&clock).unwrap().meta.closed_at.is_some());
        assert_eq!(store.archive().len(), 1);
        assert_eq!(store.index().len(), 4);
        assert!(store.realtime().is_none());
        assert!(matches!(store.close_session(&clock), Err(Error::NoOpenSession)));
    }

    #[test]
    fn only_one_open_session() {
        let clock = LogicalClock::default();
        let mut store = MemoryStore::new("p");
        open_with(&mut store, &clock, &[]);
        let t = SessionTranscript::new("p-sXXX", "p", clock.now());
        assert!(matches!(store.open(t), Err(Error::SessionAlreadyOpen)));
    }

    #[test]
    fn archive_rejects_open_or_foreign_sessions() {
        let clock = LogicalClock::default();
        let open = SessionTranscript::new("x", "p", clock.now());
        assert!(MemoryStore::with_archive("p", vec![open]).is_err());
        let mut foreign = SessionTranscript::new("x", "q", clock.now());
        foreign.meta.closed_at = Some(clock.now());
        assert!(MemoryStore::with_archive("p", vec![foreign]).is_err());
    }

    #[tokio::test]
    async fn archived_chunk_is_retrievable_right_after_close() {
        let clock = LogicalClock::default();
        let mut store = MemoryStore::new("p");
        open_with(&mut store, &clock, &["How is the gardening going?", "The tomatoes finally sprouted."]);
        store.close_session(&clock).unwrap();
        let gate = MockBackend::always("yes");
        let s = query_long_term("tomatoes sprouted?", &store, &gate, &LexicalScorer, &TemplateSet::default(), 1, 500)
            .await
            .unwrap()
            .unwrap();
        assert!(s.text.contains("The tomatoes finally sprouted."));
    }

    #[test]
    fn load_skips_unclosed_sessions() {
        let dir = tempfile::tempdir().unwrap();
        let clock = LogicalClock::default();
        let seeker_dir = dir.path().join("p");
        let mut closed = SessionTranscript::new("p-s001", "p", clock.now());
        closed.push(Speaker::Counselor, "hi", Annotations::default()).unwrap();
        closed.meta.closed_at = Some(clock.now());
        closed.save(&seeker_dir).unwrap();
        SessionTranscript::new("p-s002", "p", clock.now()).save(&seeker_dir).unwrap();
        let store = MemoryStore::load(dir.path(), "p").unwrap();
        assert_eq!(store.archive().len(), 1);
        assert_eq!(store.index().len(), 1);
        assert_eq!(store.next_session_number(), 2);
    }
}
