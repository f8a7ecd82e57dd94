//! Retrieval-first conversational response engine.
//!
//! Replies are selected from a bank of self-dialogues (conversations written
//! by one person playing both sides) with an IDF-weighted matching score, and
//! arbitrated against rule-based, proactive and generative components by a
//! fixed priority queue with confidence gating.
//!
//! The crate is organised bottom-up:
//!
//! * [`corpus`]: self-dialogue ingestion, bank construction and statistics.
//! * [`lexicon`]: tokenisation, IDF tables and sparse weighted vectors.
//! * [`match_index`]: the inverted index and matching score.
//! * [`preprocess`]: entity tagging, pronoun substitution, user signals.
//! * [`rules`]: pattern/template rules and the likes/dislikes path.
//! * [`generator`]: n-gram fallback generator with temperature sampling.
//! * [`dialogue_manager`]: the component priority queue.
//! * [`store`]: conversation persistence.
//! * [`evalkit`]: offline evaluation of the matching score.

pub mod corpus;
pub mod dialogue_manager;
pub mod error;
pub mod evalkit;
pub mod fixtures;
pub mod generator;
pub mod lexicon;
pub mod match_index;
pub mod preprocess;
pub mod rules;
pub mod store;

pub use error::{Error, Result};
