//! Keyword-seeded poem generation.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! * [`corpus`] ingests poem files and derives frequency, co-occurrence and
//!   POS statistics.
//! * [`langmodel`] provides forward and backward next-token models: an exact
//!   count-based n-gram family and a from-scratch LSTM family with an
//!   optional per-step condition vector, plus the sentence encoder and the
//!   poem-level state model.
//! * [`keywords`] turns image-tag candidates into an ordered keyword set,
//!   filtering and expanding it to one seed per line.
//! * [`generator`] grows each line in both directions around its seed and
//!   assembles whole poems.
//! * [`fluency`] scores candidate lines and drives regeneration.
//!
//! Data-parallel loops (minibatch gradients, batch generation, batch scoring)
//! go through [`par::Exec`]; with the `parallel` feature disabled every path
//! runs sequentially and produces bit-identical results.

pub mod corpus;
pub mod error;
pub mod fluency;
pub mod generator;
pub mod keywords;
pub mod langmodel;
pub mod math;
pub mod par;
mod persist;

pub use persist::write_atomic;

pub use error::{Error, Result};

/// Dense vocabulary index.
pub type TokenId = u32;
