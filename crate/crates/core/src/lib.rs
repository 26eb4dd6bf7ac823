//! Core of a question-driven website navigation benchmark.
//!
//! Everything in this crate is IO-free and builds without `std` (an
//! allocator is required). File formats, HTML ingestion, image decoding,
//! network clients and the CLI live in the companion `webvln` crate.
//!
//! Module map:
//! - [`graph`]: pages, clickable buttons and the directed navigation graph.
//! - [`sim`]: the episode state machine serving observations and applying actions.
//! - [`datagen`]: ground-truth path sampling, QA prompt assembly and record generation.
//! - [`metrics`]: SR / OSR / SPL / TL, Wu-Palmer based WUPS, BLEU and ROUGE-L.
//! - [`tensor`], [`autograd`]: dense matrices and a reverse-mode tape.
//! - [`model`]: the trainable navigation-and-answering network.
//! - [`train`]: imitation-learning loop, optimizers and gradient checking.
//! - [`agents`]: agent trait plus random, greedy, oracle, learned and LLM agents.
//! - [`eval`]: running agents over records and building metric reports.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod agents;
pub mod autograd;
pub mod datagen;
pub mod eval;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod sim;
pub mod tensor;
pub mod text;
pub mod train;
pub mod vision;

pub use graph::{Button, NavGraph, PageId, WebPage};
pub use sim::{Action, EpisodeRecord, EpisodeState, Observation, Simulator, Split, Trajectory};
