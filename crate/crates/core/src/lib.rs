//! Simulated help-seeker for counseling practice and evaluation.
//!
//! The seeker is a chat agent whose emotion and chief complaint change during
//! a session and who remembers earlier sessions. Every model-backed step goes
//! through a [`backend::ChatBackend`], so the whole engine runs against the
//! deterministic [`backend::MockBackend`] in tests.

pub mod backend;
pub mod complaint;
pub mod config;
pub mod domain;
pub mod emotion;
pub mod error;
pub mod eval;
pub mod memory;
pub mod orchestrator;
pub mod prompt;
pub mod text;

pub use error::{Error, Result};
