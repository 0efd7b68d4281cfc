//! Tertiary memory.
//!
//! * real-time: the transcript of the open session, fed to the seeker in full;
//! * short-term: self-report scale results and a recently encountered event,
//!   summarized into the `status` and `situation` slots at session open;
//! * long-term: every closed session with its scale records, chunked and
//!   indexed, retrieved only when a gate decides the counselor refers back.

mod event;
mod retrieval;
mod scale;
mod store;
mod summary;

pub use event::{load_event_corpus, sample_event, Applicability, EventRecord, Selector};
pub use retrieval::{
    query_long_term, rank_chunks, Chunk, ChunkSource, EmbeddingScorer, LexicalScorer, RetrievalIndex,
    RetrievalScorer, Supplement,
};
pub use scale::{
    administer_scales, parse_option, Aggregation, ItemResponse, ScaleDefinition, ScaleItem, ScaleOption,
    ScaleRecord,
};
pub(crate) use retrieval::cosine;
pub use store::{MemoryStore, ShortTermMemory};
pub use summary::{scale_deltas, scale_digest, summarize_short_term, ScaleDelta, Trend};
