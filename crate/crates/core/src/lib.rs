//! Corpus-noise toolkit and experiment harness: flip-noise data
//! construction, portable learn/unlearn training plans, and flip-aware
//! judge-based evaluation, with a BPE tokenization-divergence analyzer.
//!
//! The library splits along the experiment workflow:
//!
//! - [`corpus`] — record model, cleaning, dedup, dataset files + manifests
//! - [`noise`] — word/char flips, pos/neg pairs, derangement, counterfactuals
//! - [`prompts`] — test suites, 5-shot flipped probes, judge templates
//! - [`plans`] — the training-combination catalog and run state
//! - [`inference`] — model clients (HTTP + deterministic mocks), batching
//! - [`eval`] — flip-aware scoring, judges, English-word ratio, reports
//! - [`tokscan`] — BPE encoder and tokenization-divergence reports
//!
//! Per-item work runs data-parallel on rayon under the default `parallel`
//! feature; disabling it swaps in a sequential fallback with identical
//! results.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod inference;
pub mod noise;
pub mod par;
pub mod plans;
pub mod prompts;
pub mod seed;
pub mod tokscan;

pub use error::{Error, Result};
