//! Core algorithms for LLM-assisted narrative memory experiments.
//!
//! Everything in this crate is pure and `no_std` (with `alloc`): clause-segmented
//! stimuli and lures, prompt rendering and completion parsing, an offline mock
//! scorer/embedder, the statistics used for recall and recognition analysis, and
//! the experiment session state machine. IO, HTTP and the CLI live in the
//! `narrecall` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod mock;
pub mod parse;
pub mod prompt;
pub mod recall;
pub mod recognition;
pub mod reliability;
pub mod session;
pub mod similarity;
pub mod stats;
pub mod synth;
pub mod text;

mod math;

pub use corpus::{Clause, LureLabel, LurePool, Narrative, NarrativeKind, ProbeSet, StimulusStats};
pub use prompt::{PromptArgs, PromptKind};
pub use stats::CorrelationResult;
