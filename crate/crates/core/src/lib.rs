//! Slot filling with label embeddings derived from word–label co-occurrence.
//!
//! The crate covers the full pipeline: CoNLL corpus handling and coverage
//! reduction, co-occurrence statistics, label embeddings and distance
//! features, a Bi-GRU + CRF tagger with hand-written gradients, training
//! with Nadam, and CoNLL-style evaluation with error analysis.

pub mod cooccurrence;
pub mod corpus;
pub mod crf;
pub mod error;
pub mod evaluation;
pub mod label_space;
pub mod neural;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
