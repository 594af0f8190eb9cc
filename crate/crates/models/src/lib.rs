//! Multiple-choice classifiers on top of `mcgen-autodiff`.
//!
//! * FFNN: scores each (article, title) pair as yes/no from mean-pooled
//!   embeddings; an instance picks the option with the highest P(yes).
//! * FFNN5: a single 5-way softmax over the article and all five titles.
//! * Hybrid: a GRU encoder-decoder with attention reads the article and
//!   teacher-forces the title; pooled encoder and decoder outputs feed an
//!   FFNN head. The loss adds λ_gen times the title generation
//!   cross-entropy of gold pairs to the classification loss.

pub mod config;
pub mod data;
pub mod model;
pub mod nets;
pub mod train;

use std::path::PathBuf;

pub use config::{Attention, ModelConfig, ModelKind, Pooling, TrainConfig};
pub use data::{build_vocab, encode_instances, EncodeStats, EncodedInstance, InstanceBatch, PairBatch};
pub use model::{CheckpointHeader, Model};
pub use train::{train, MetricsRow, TrainOutcome};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] mcgen_autodiff::Error),
    #[error(transparent)]
    Core(#[from] mcgen_core::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid: {0}")]
    Invalid(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("training diverged at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
