use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use mcgen_autodiff::{ParamStore, Tape};
use mcgen_core::corpus::Vocabulary;
use mcgen_core::evalharness::Prediction;
use mcgen_core::seed::{sha256_hex, Seeds};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, ModelKind};
use crate::data::{encode_text, EncodedInstance, InstanceBatch, PairBatch};
use crate::nets::{self, Layout};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"MCGENCK1";
const FORMAT: &str = "mcgen-model/1";
const PREDICT_CHUNK: usize = 8;

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore<f32>,
    layout: Layout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub config: ModelConfig,
    pub config_hash: String,
    pub step: usize,
    pub dev_accuracy: Option<f64>,
    pub vocab_tokens: Vec<String>,
    pub vocab_counts: Vec<u64>,
    pub tensors: Vec<TensorInfo>,
}

pub fn config_hash(cfg: &ModelConfig) -> String {
    sha256_hex(&serde_json::to_vec(cfg).expect("config serializes"))
}

impl Model {
    /// Fresh parameters drawn from the `"init"` stream of `seed`. The config's
    /// vocab size is replaced by the actual vocabulary size.
    pub fn new(mut config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        config.vocab_size = vocab.len();
        config.validate()?;
        let params = nets::init_params(&config, &mut Seeds::new(seed).rng("init"))?;
        Self::from_parts(config, vocab, params)
    }

    pub fn from_parts(config: ModelConfig, vocab: Vocabulary, params: ParamStore<f32>) -> Result<Self> {
        if vocab.len() != config.vocab_size {
            return Err(Error::Invalid(format!(
                "vocabulary has {} entries, config says {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        let layout = Layout::resolve(&params, &config)?;
        Ok(Model {
            config,
            vocab,
            params,
            layout,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// P(yes) for every pair in `batch`.
    pub fn yes_probs(&self, batch: &PairBatch) -> Result<Vec<f64>> {
        let mut t = Tape::new(&self.params);
        let logits = match self.config.kind {
            ModelKind::Ffnn => nets::ffnn_logits(&mut t, &self.layout, batch)?,
            ModelKind::Hybrid => nets::hybrid_forward(&mut t, &self.layout, batch, false)?.logits,
            ModelKind::Ffnn5 => return Err(Error::Invalid("5-class model scores whole instances".into())),
        };
        let p = t.softmax(logits);
        Ok(t.value(p).chunks(2).map(|r| r[1] as f64).collect())
    }

    /// Option scores for each instance: P(yes) per option, or the 5-way
    /// softmax for the 5-class model.
    pub fn option_scores(&self, data: &[EncodedInstance]) -> Result<Vec<Vec<f64>>> {
        let chunks: Vec<Result<Vec<Vec<f64>>>> = data
            .par_chunks(PREDICT_CHUNK)
            .map(|chunk| match self.config.kind {
                ModelKind::Ffnn5 => {
                    let b = InstanceBatch::from_instances(chunk);
                    let mut t = Tape::new(&self.params);
                    let p = nets::ffnn5_forward(&mut t, &self.layout, &b)?;
                    Ok(t.value(p).chunks(5).map(|r| r.iter().map(|&x| x as f64).collect()).collect())
                }
                _ => {
                    let mut b = PairBatch::default();
                    for inst in chunk {
                        for o in &inst.options {
                            b.push(&inst.article, o, 0);
                        }
                    }
                    let probs = self.yes_probs(&b)?;
                    let mut out = Vec::with_capacity(chunk.len());
                    let mut at = 0;
                    for inst in chunk {
                        out.push(probs[at..at + inst.options.len()].to_vec());
                        at += inst.options.len();
                    }
                    Ok(out)
                }
            })
            .collect();
        let mut out = Vec::with_capacity(data.len());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }

    pub fn predict(&self, data: &[EncodedInstance]) -> Result<Vec<Prediction>> {
        Ok(self
            .option_scores(data)?
            .into_iter()
            .zip(data)
            .map(|(s, inst)| Prediction::from_scores(&inst.id, s))
            .collect())
    }

    /// Greedy answer for an encoded article.
    pub fn generate(&self, article: &[u32], max_len: usize) -> Result<Vec<u32>> {
        let mut t = Tape::new(&self.params);
        nets::generate(&mut t, &self.layout, article, max_len)
    }

    pub fn generate_text(&self, article: &str, max_len: usize) -> Result<Vec<String>> {
        let (ids, _) = encode_text(&self.vocab, article, self.config.max_article_len);
        Ok(self.vocab.decode(&self.generate(&ids, max_len)?))
    }

    pub fn save(&self, path: impl AsRef<Path>, step: usize, dev_accuracy: Option<f64>) -> Result<()> {
        let path = path.as_ref();
        let header = CheckpointHeader {
            format: FORMAT.into(),
            config: self.config.clone(),
            config_hash: config_hash(&self.config),
            step,
            dev_accuracy,
            vocab_tokens: self.vocab.tokens().to_vec(),
            vocab_counts: self.vocab.counts().to_vec(),
            tensors: self
                .params
                .ids()
                .map(|id| {
                    let [rows, cols] = self.params.shape(id);
                    TensorInfo {
                        name: self.params.name(id).to_string(),
                        rows,
                        cols,
                    }
                })
                .collect(),
        };
        let head = serde_json::to_vec(&header)?;
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&(head.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&head).map_err(io)?;
        for id in self.params.ids() {
            let buf: Vec<u8> = self.params.value(id).iter().flat_map(|x| x.to_le_bytes()).collect();
            w.write_all(&buf).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, CheckpointHeader)> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut r = BufReader::new(File::open(path).map_err(io)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("{} is not a model checkpoint", path.display())));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(io)?;
        let mut head = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut head).map_err(io)?;
        let header: CheckpointHeader = serde_json::from_slice(&head)?;
        if header.format != FORMAT {
            return Err(Error::Format(format!("unsupported checkpoint format `{}`", header.format)));
        }
        let mut params = ParamStore::new();
        for ti in &header.tensors {
            let mut buf = vec![0u8; ti.rows * ti.cols * 4];
            r.read_exact(&mut buf).map_err(io)?;
            let data = buf.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
            params.add(&ti.name, ti.rows, ti.cols, data)?;
        }
        if r.read(&mut [0u8; 1]).map_err(io)? != 0 {
            return Err(Error::Format("trailing bytes after tensors".into()));
        }
        let counts: HashMap<String, u64> = header
            .vocab_tokens
            .iter()
            .cloned()
            .zip(header.vocab_counts.iter().copied())
            .collect();
        let n_words = header.vocab_tokens.len().saturating_sub(mcgen_core::corpus::SENTINELS.len());
        let vocab = Vocabulary::from_counts(counts, 1, n_words);
        if vocab.tokens() != header.vocab_tokens.as_slice() {
            return Err(Error::Format("vocabulary does not rebuild in stored order".into()));
        }
        let model = Model::from_parts(header.config.clone(), vocab, params)?;
        Ok((model, header))
    }
}
