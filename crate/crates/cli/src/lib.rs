//! The `mcgen` command line: every pipeline stage as a subcommand.
//!
//! Settings are layered as built-in defaults, then a TOML config file
//! (`--config` or `MCGEN_CONFIG`), then flags. Each run writes its outputs
//! under `--out-dir`, a provenance record to `provenance/<command>.json` and
//! log lines to `mcgen.log`. Exit codes: 0 success, 1 usage, 2 runtime.

pub mod commands;
pub mod config;
pub mod provenance;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mcgen_core::mccreate::Split;

pub use config::{GlobalFlags, RunConfig};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Bad invocation or configuration, reported with exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "mcgen", version, about = "Multiple-choice dataset generation, baselines and models")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// TOML config file layered over the built-in defaults
    #[arg(long, global = true, env = "MCGEN_CONFIG", value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Root seed for every random sub-stream (default 1)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for outputs, provenance records and the run log (default .)
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for parallel stages (default 1)
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Allow results that depend on the worker count (hogwild paragraph-vector training)
    #[arg(long, global = true)]
    pub nondeterministic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetVariant {
    /// Paragraph-vector decoys
    Pv,
    /// Uniformly random decoys
    Rnd,
    /// Half of the instances from each
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Ffnn,
    Ffnn5,
    Hybrid,
}

impl From<KindArg> for mcgen_models::ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Ffnn => Self::Ffnn,
            KindArg::Ffnn5 => Self::Ffnn5,
            KindArg::Hybrid => Self::Hybrid,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a JSONL corpus of {id, title, article}, drop bad lines, write corpus.jsonl
    Ingest {
        /// Source JSONL file
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Keep at most this many documents
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Generate the templated synthetic corpus as corpus.jsonl
    SynthCorpus {
        /// Number of documents (overrides [synth] docs)
        #[arg(long)]
        docs: Option<usize>,
    },
    /// Train paragraph vectors over corpus titles, write pv.bin
    TrainPv {
        /// Corpus JSONL (default <out-dir>/corpus.jsonl)
        #[arg(long, value_name = "FILE")]
        corpus: Option<PathBuf>,
        /// Training epochs (overrides [pv] epochs)
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Build a multiple-choice dataset, write dataset-<variant>.jsonl
    BuildDataset {
        /// Decoy source
        #[arg(long, value_enum, default_value_t = DatasetVariant::Pv)]
        variant: DatasetVariant,
        /// Corpus JSONL (default <out-dir>/corpus.jsonl)
        #[arg(long, value_name = "FILE")]
        corpus: Option<PathBuf>,
        /// Paragraph-vector model (default <out-dir>/pv.bin)
        #[arg(long, value_name = "FILE")]
        pv: Option<PathBuf>,
    },
    /// Instance counts and average token lengths per split
    Stats {
        /// Dataset JSONL (default <out-dir>/dataset-pv.jsonl)
        #[arg(long, value_name = "FILE")]
        dataset: Option<PathBuf>,
    },
    /// Random, BLEU and paragraph-vector baselines on one split
    EvalBaselines {
        /// Dataset JSONL (default <out-dir>/dataset-pv.jsonl)
        #[arg(long, value_name = "FILE")]
        dataset: Option<PathBuf>,
        /// Paragraph-vector model (default <out-dir>/pv.bin)
        #[arg(long, value_name = "FILE")]
        pv: Option<PathBuf>,
        /// Split to score
        #[arg(long, default_value = "dev")]
        split: Split,
    },
    /// Train a classifier on the train split, selecting by dev accuracy
    TrainModel {
        /// Model family
        #[arg(value_enum)]
        kind: KindArg,
        /// Dataset JSONL (default <out-dir>/dataset-pv.jsonl)
        #[arg(long, value_name = "FILE")]
        dataset: Option<PathBuf>,
        /// Training steps (overrides [train] steps)
        #[arg(long)]
        steps: Option<usize>,
        /// Generation-loss weight of the hybrid model (overrides [model] lambda_gen)
        #[arg(long)]
        lambda_gen: Option<f64>,
    },
    /// Accuracy and error bar of a saved checkpoint on one split
    EvalModel {
        /// Checkpoint written by train-model
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Dataset JSONL (default <out-dir>/dataset-pv.jsonl)
        #[arg(long, value_name = "FILE")]
        dataset: Option<PathBuf>,
        /// Split to score
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Train the hybrid model once per generation-loss weight
    SweepLambdaGen {
        /// Weights to try
        #[arg(value_name = "LAMBDA", default_values_t = [0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0])]
        lambdas: Vec<f64>,
        /// Dataset JSONL (default <out-dir>/dataset-pv.jsonl)
        #[arg(long, value_name = "FILE")]
        dataset: Option<PathBuf>,
        /// Training steps per run (overrides [train] steps)
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Train the hybrid model over the tied-embedding x attention grid
    Ablate {
        /// Dataset JSONL (default <out-dir>/dataset-pv.jsonl)
        #[arg(long, value_name = "FILE")]
        dataset: Option<PathBuf>,
        /// Training steps per run (overrides [train] steps)
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Serve the annotation HTTP API (and optionally the UI bundle)
    ServeAnnotate {
        /// Dataset JSONL (default <out-dir>/dataset-pv.jsonl)
        #[arg(long, value_name = "FILE")]
        dataset: Option<PathBuf>,
        /// Listen port (overrides [annotate] port)
        #[arg(long)]
        port: Option<u16>,
        /// Record log (overrides [annotate] log)
        #[arg(long, value_name = "FILE")]
        log: Option<PathBuf>,
        /// Directory of static UI files served at /
        #[arg(long, value_name = "DIR")]
        static_dir: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::SynthCorpus { .. } => "synth-corpus",
            Command::TrainPv { .. } => "train-pv",
            Command::BuildDataset { .. } => "build-dataset",
            Command::Stats { .. } => "stats",
            Command::EvalBaselines { .. } => "eval-baselines",
            Command::TrainModel { .. } => "train-model",
            Command::EvalModel { .. } => "eval-model",
            Command::SweepLambdaGen { .. } => "sweep-lambda-gen",
            Command::Ablate { .. } => "ablate",
            Command::ServeAnnotate { .. } => "serve-annotate",
        }
    }
}

impl From<&Global> for GlobalFlags {
    fn from(g: &Global) -> Self {
        GlobalFlags {
            config: g.config.clone(),
            seed: g.seed,
            out_dir: g.out_dir.clone(),
            workers: g.workers,
            nondeterministic: g.nondeterministic,
        }
    }
}

/// Exit code for an error returned by [`commands::run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}
