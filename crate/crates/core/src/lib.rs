//! Measures of funneling and focusing in classroom dialogue.
//!
//! The library ingests transcripts and expert judgments, derives gold scores,
//! computes the unsupervised forwards-range and lexical measures, and
//! evaluates any measure against gold labels and teaching outcomes.

pub mod corpus;
pub mod error;
pub mod eval_stats;
pub mod forwards_range;
pub mod lexical_features;
pub mod phrase_miner;
pub mod synth;
pub mod textprep;

pub use error::{Error, Result};
