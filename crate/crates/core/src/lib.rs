//! Induces AND/OR task graphs from multiple noisy transcripts of the same
//! instructional activity.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! 1. [`summarize`] prompts a completion model for a step list per transcript.
//! 2. [`cluster`] groups summary steps into key steps via maximal cliques of a
//!    cosine-similarity graph, then merges paraphrase clusters.
//! 3. [`label`] re-expresses each summary as a key step sequence.
//! 4. [`rank`] scores sequences with a language-model likelihood and keeps the
//!    most confident fraction.
//! 5. [`graphinfer`] fits one decision tree per key step over completion
//!    vectors and consolidates the resulting DNF preconditions into a graph.
//!
//! All model access goes through the traits in [`providers`]. [`simulate`]
//! generates rollouts from a known graph for verification, and [`pipeline`]
//! wires the stages together with on-disk persistence.

pub mod cluster;
pub mod dot;
mod error;
pub mod graphinfer;
pub mod label;
mod par;
pub mod pipeline;
pub mod providers;
pub mod rank;
pub mod simulate;
pub mod summarize;

pub use error::{Error, Result};
