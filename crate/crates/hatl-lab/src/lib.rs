//! Desk-scale laboratory for hierarchical adaptive transfer learning (HATL)
//! on a synthetic continuous sign-to-text task.
//!
//! The crate provides, as plain library modules:
//!
//! - a tiny deterministic tensor/autodiff substrate ([`mat`], [`tape`], [`rng`]),
//! - an exact CTC loss with analytic gradients ([`ctc`]),
//! - the composite multi-task training loss ([`losses`]),
//! - a small frame-encoder / gloss-encoder / text-decoder model ([`model`]),
//! - AdamW with layer-wise learning-rate decay and warmup ([`optim`]),
//! - the performance-aware progressive unfreezing controller ([`controller`]),
//! - beam-search decoding with n-gram LM fusion ([`decode`], [`ngram`]),
//! - translation metrics ([`metrics`]),
//! - a synthetic domain-shift dataset generator ([`data`]),
//! - and the training/evaluation harness behind the `hatl-lab` binary
//!   ([`harness`], [`config`], [`checkpoint`]).
//!
//! Every module is exercised by a runnable program under `examples/`; start
//! there to see the intended call patterns.

pub mod checkpoint;
pub mod config;
pub mod controller;
pub mod ctc;
pub mod data;
pub mod decode;
pub mod error;
pub mod harness;
pub mod losses;
pub mod mat;
pub mod metrics;
pub mod model;
pub mod ngram;
pub mod optim;
pub mod rng;
pub mod tape;

pub use error::{Error, Result};
