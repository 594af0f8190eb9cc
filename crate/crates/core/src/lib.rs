//! Building blocks for generating multiple-choice reading-comprehension
//! datasets from (title, article) corpora.
//!
//! The pipeline is:
//!
//! 1. [`corpus`]: ingest JSON Lines corpora, tokenize, build vocabularies.
//! 2. [`pvdbow`]: train paragraph vectors over titles and query cosine neighbors.
//! 3. [`mccreate`]: score neighbor titles as decoys and assemble 5-way instances.
//! 4. [`evalharness`]: random / BLEU / paragraph-vector baselines and error bars.
//!
//! [`synth`] generates a templated synthetic corpus in the same JSONL format,
//! so everything runs without access to a licensed news corpus.

pub mod corpus;
pub mod error;
pub mod evalharness;
pub mod mccreate;
pub mod pvdbow;
pub mod seed;
pub mod synth;
pub mod textmetrics;

pub use error::{Error, Result};
