//! Political-leaning classification of video titles.
//!
//! The crate covers the whole pipeline: ingesting and splitting labelled
//! title datasets ([`corpus`]), word-level and WordPiece tokenization
//! ([`tokenize`]), a small CPU neural-network core with hand-written
//! backward passes ([`nn`]), embedding initialization and skip-gram
//! pretraining ([`embed`]), the three classifier architectures
//! ([`models`]), Adam training with checkpointing ([`train`]), metrics and
//! confusion-matrix rendering ([`eval`]) and channel-level aggregation
//! ([`channels`]).

pub mod channels;
pub mod corpus;
pub mod embed;
mod error;
pub mod eval;
mod label;
pub mod models;
pub mod nn;
pub mod seed;
pub mod tokenize;
pub mod train;

pub use error::{Error, Result};
pub use label::{LeaningLabel, NUM_CLASSES};
