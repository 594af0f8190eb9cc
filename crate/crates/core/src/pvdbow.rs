//! Paragraph vectors (PV-DBOW) over titles with negative sampling.
//!
//! Each title owns a document vector that is trained to predict every token
//! of the title (the window is the whole title) against `negative_samples`
//! noise words drawn from the unigram^0.75 distribution. Only document
//! vectors and word output vectors exist; no input word vectors are trained.
//!
//! Training runs either single-worker (bitwise deterministic given the seed)
//! or hogwild-style with several workers racing on shared tables.

use std::cell::Cell;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus, Fields, Vocabulary, SENTINELS, UNK};
use crate::error::{Error, Result};
use crate::seed::{keyed_hash, sha256_hex, Rng};

const MAGIC: &[u8; 8] = b"MCGPV\x00v1";
pub(crate) const NEIGHBOR_BLOCK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvConfig {
    pub dim: usize,
    pub epochs: usize,
    pub min_count: u64,
    pub negative_samples: usize,
    pub initial_lr: f32,
    pub final_lr: f32,
    pub seed: u64,
    pub window_is_whole_title: bool,
    /// 1 = deterministic single worker; more = hogwild.
    pub workers: usize,
    /// Noise sampler; recorded so the "softmax sampling" reading is explicit.
    pub sampler: String,
}

impl Default for PvConfig {
    fn default() -> Self {
        PvConfig {
            dim: 256,
            epochs: 5,
            min_count: 5,
            negative_samples: 10,
            initial_lr: 0.025,
            final_lr: 0.0001,
            seed: 1,
            window_is_whole_title: true,
            workers: 1,
            sampler: "negative-sampling/unigram^0.75".into(),
        }
    }
}

impl PvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.epochs == 0 || self.negative_samples == 0 || self.workers == 0 {
            return Err(Error::InvalidArgument(
                "dim, epochs, negative_samples and workers must be at least 1".into(),
            ));
        }
        if !(self.initial_lr > 0.0 && self.final_lr > 0.0) {
            return Err(Error::InvalidArgument("learning rates must be positive".into()));
        }
        if !self.window_is_whole_title {
            return Err(Error::InvalidArgument("only whole-title windows are supported".into()));
        }
        Ok(())
    }
}

/// Samples word ids proportionally to count^0.75.
#[derive(Debug, Clone)]
struct NoiseSampler {
    cumulative: Vec<f64>,
}

impl NoiseSampler {
    fn new(vocab: &Vocabulary) -> Self {
        let mut acc = 0.0;
        let cumulative = vocab
            .counts()
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        NoiseSampler { cumulative }
    }

    fn sample(&self, rng: &mut Rng) -> usize {
        let total = *self.cumulative.last().unwrap();
        let x = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= x).min(self.cumulative.len() - 1)
    }
}

/// Row storage shared by the single-worker (`Cell`) and hogwild (`AtomicU32`)
/// training paths.
trait Table: Sync {
    fn read_row(&self, row: usize, dim: usize, out: &mut [f32]);
    fn add_row(&self, row: usize, dim: usize, delta: &[f32], scale: f32);
}

struct CellTable<'a>(&'a [Cell<f32>]);

// Only ever used from one thread; `Sync` is required by the trait bound alone.
unsafe impl Sync for CellTable<'_> {}

impl Table for CellTable<'_> {
    fn read_row(&self, row: usize, dim: usize, out: &mut [f32]) {
        for (o, c) in out.iter_mut().zip(&self.0[row * dim..(row + 1) * dim]) {
            *o = c.get();
        }
    }

    fn add_row(&self, row: usize, dim: usize, delta: &[f32], scale: f32) {
        for (c, d) in self.0[row * dim..(row + 1) * dim].iter().zip(delta) {
            c.set(c.get() + scale * d);
        }
    }
}

struct FrozenTable<'a>(&'a [f32]);

impl Table for FrozenTable<'_> {
    fn read_row(&self, row: usize, dim: usize, out: &mut [f32]) {
        out.copy_from_slice(&self.0[row * dim..(row + 1) * dim]);
    }

    fn add_row(&self, _: usize, _: usize, _: &[f32], _: f32) {
        unreachable!("frozen table is read-only");
    }
}

struct AtomicTable(Vec<AtomicU32>);

impl AtomicTable {
    fn from_f32(v: &[f32]) -> Self {
        AtomicTable(v.iter().map(|x| AtomicU32::new(x.to_bits())).collect())
    }

    fn into_f32(self) -> Vec<f32> {
        self.0.into_iter().map(|a| f32::from_bits(a.into_inner())).collect()
    }
}

impl Table for AtomicTable {
    fn read_row(&self, row: usize, dim: usize, out: &mut [f32]) {
        for (o, a) in out.iter_mut().zip(&self.0[row * dim..(row + 1) * dim]) {
            *o = f32::from_bits(a.load(Ordering::Relaxed));
        }
    }

    // Unsynchronized read-modify-write: concurrent updates may be lost.
    fn add_row(&self, row: usize, dim: usize, delta: &[f32], scale: f32) {
        for (a, d) in self.0[row * dim..(row + 1) * dim].iter().zip(delta) {
            let cur = f32::from_bits(a.load(Ordering::Relaxed));
            a.store((cur + scale * d).to_bits(), Ordering::Relaxed);
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0f32;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    acc.iter().sum::<f32>() + tail
}

fn log_sigmoid(x: f32) -> f64 {
    let x = x as f64;
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

struct Scratch {
    doc: Vec<f32>,
    out: Vec<f32>,
    grad: Vec<f32>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Scratch {
            doc: vec![0.0; dim],
            out: vec![0.0; dim],
            grad: vec![0.0; dim],
        }
    }
}

/// One SGD update of a document row against one target word and its noise
/// samples. Returns the negative-sampling loss before the update.
#[allow(clippy::too_many_arguments)]
fn train_token(
    docs: &dyn Table,
    doc_row: usize,
    words: &dyn Table,
    update_words: bool,
    target: usize,
    sampler: &NoiseSampler,
    negatives: usize,
    lr: f32,
    dim: usize,
    rng: &mut Rng,
    s: &mut Scratch,
) -> f64 {
    docs.read_row(doc_row, dim, &mut s.doc);
    s.grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for k in 0..=negatives {
        let (word, label) = if k == 0 {
            (target, 1.0f32)
        } else {
            let w = sampler.sample(rng);
            if w == target {
                continue;
            }
            (w, 0.0)
        };
        words.read_row(word, dim, &mut s.out);
        let f = dot(&s.doc, &s.out);
        loss -= if label > 0.0 { log_sigmoid(f) } else { log_sigmoid(-f) };
        let sig = 1.0 / (1.0 + (-f).exp());
        let g = (label - sig) * lr;
        for (acc, o) in s.grad.iter_mut().zip(&s.out) {
            *acc += g * o;
        }
        if update_words {
            words.add_row(word, dim, &s.doc, g);
        }
    }
    docs.add_row(doc_row, dim, &s.grad, 1.0);
    loss
}

fn init_rows(rng: &mut Rng, rows: usize, dim: usize) -> Vec<f32> {
    let half = 0.5 / dim as f32;
    (0..rows * dim).map(|_| rng.random_range(-half..half)).collect()
}

#[derive(Debug, Clone)]
pub struct PvModel {
    pub config: PvConfig,
    pub vocab: Vocabulary,
    doc_ids: Vec<String>,
    doc_index: HashMap<String, usize>,
    doc_vectors: Vec<f32>,
    word_output_vectors: Vec<f32>,
    inv_norms: Vec<f64>,
    id_rank: Vec<u32>,
    sampler: NoiseSampler,
    /// Average per-token loss of each training epoch.
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferredVector {
    pub vector: Vec<f32>,
    pub known_tokens: usize,
    pub all_unknown: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub doc_id: String,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborList {
    pub query_id: String,
    pub entries: Vec<Neighbor>,
}

/// Trains paragraph vectors over the corpus titles.
pub fn train_pv(corpus: &Corpus, cfg: &PvConfig) -> Result<PvModel> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("corpus".into()));
    }
    let vocab = Vocabulary::build(corpus, Fields::Title, cfg.min_count, usize::MAX - SENTINELS.len())?;
    if vocab.is_empty() {
        return Err(Error::Empty(format!("no title token occurs at least {} times", cfg.min_count)));
    }
    let encoded: Vec<Vec<u32>> = corpus
        .docs
        .iter()
        .map(|d| vocab.encode(&tokenize(&d.title)).into_iter().filter(|&t| t != UNK).collect())
        .collect();
    let dim = cfg.dim;
    let mut init_rng = Rng::seed_from_u64(keyed_hash(cfg.seed, "pv-init"));
    let doc_vectors = init_rows(&mut init_rng, corpus.len(), dim);
    let word_output_vectors = vec![0.0f32; vocab.len() * dim];
    let sampler = NoiseSampler::new(&vocab);

    let (doc_vectors, word_output_vectors, epoch_losses) = if cfg.workers == 1 {
        train_single(cfg, &encoded, doc_vectors, word_output_vectors, &sampler)
    } else {
        train_hogwild(cfg, &encoded, doc_vectors, word_output_vectors, &sampler)
    };

    let doc_ids: Vec<String> = corpus.docs.iter().map(|d| d.id.clone()).collect();
    Ok(PvModel::assemble(
        cfg.clone(),
        vocab,
        doc_ids,
        doc_vectors,
        word_output_vectors,
        epoch_losses,
    ))
}

fn lr_at(cfg: &PvConfig, done: u64, total: u64) -> f32 {
    let frac = done as f32 / total.max(1) as f32;
    (cfg.initial_lr - (cfg.initial_lr - cfg.final_lr) * frac).max(cfg.final_lr)
}

fn train_single(
    cfg: &PvConfig,
    encoded: &[Vec<u32>],
    mut docs: Vec<f32>,
    mut words: Vec<f32>,
    sampler: &NoiseSampler,
) -> (Vec<f32>, Vec<f32>, Vec<f64>) {
    let dim = cfg.dim;
    let mut rng = Rng::seed_from_u64(keyed_hash(cfg.seed, "pv-train"));
    let total = (cfg.epochs * encoded.len()) as u64;
    let mut done = 0u64;
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut scratch = Scratch::new(dim);
    {
        let doc_t = CellTable(Cell::from_mut(docs.as_mut_slice()).as_slice_of_cells());
        let word_t = CellTable(Cell::from_mut(words.as_mut_slice()).as_slice_of_cells());
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let (mut loss, mut count) = (0.0, 0u64);
            for &d in &order {
                let lr = lr_at(cfg, done, total);
                for &w in &encoded[d] {
                    loss += train_token(
                        &doc_t,
                        d,
                        &word_t,
                        true,
                        w as usize,
                        sampler,
                        cfg.negative_samples,
                        lr,
                        dim,
                        &mut rng,
                        &mut scratch,
                    );
                    count += 1;
                }
                done += 1;
            }
            losses.push(loss / count.max(1) as f64);
        }
    }
    (docs, words, losses)
}

fn train_hogwild(
    cfg: &PvConfig,
    encoded: &[Vec<u32>],
    docs: Vec<f32>,
    words: Vec<f32>,
    sampler: &NoiseSampler,
) -> (Vec<f32>, Vec<f32>, Vec<f64>) {
    let dim = cfg.dim;
    let doc_t = AtomicTable::from_f32(&docs);
    let word_t = AtomicTable::from_f32(&words);
    let total = (cfg.epochs * encoded.len()) as u64;
    let done = AtomicU64::new(0);
    let mut order_rng = Rng::seed_from_u64(keyed_hash(cfg.seed, "pv-train"));
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .expect("thread pool");
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let shard = order.len().div_ceil(cfg.workers);
        let (loss, count) = pool.install(|| {
            order
                .par_chunks(shard)
                .enumerate()
                .map(|(w, chunk)| {
                    let mut rng = Rng::seed_from_u64(keyed_hash(cfg.seed, &format!("pv-worker-{epoch}-{w}")));
                    let mut scratch = Scratch::new(dim);
                    let (mut loss, mut count) = (0.0, 0u64);
                    for &d in chunk {
                        let lr = lr_at(cfg, done.fetch_add(1, Ordering::Relaxed), total);
                        for &t in &encoded[d] {
                            loss += train_token(
                                &doc_t,
                                d,
                                &word_t,
                                true,
                                t as usize,
                                sampler,
                                cfg.negative_samples,
                                lr,
                                dim,
                                &mut rng,
                                &mut scratch,
                            );
                            count += 1;
                        }
                    }
                    (loss, count)
                })
                .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
        });
        losses.push(loss / count.max(1) as f64);
    }
    (doc_t.into_f32(), word_t.into_f32(), losses)
}

/// Cosine of two vectors, clamped to [-1, 1].
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::InvalidArgument(format!(
            "cosine of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let nu = dot(u, u) as f64;
    let nv = dot(v, v) as f64;
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) as f64 / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

impl PvModel {
    fn assemble(
        config: PvConfig,
        vocab: Vocabulary,
        doc_ids: Vec<String>,
        doc_vectors: Vec<f32>,
        word_output_vectors: Vec<f32>,
        epoch_losses: Vec<f64>,
    ) -> Self {
        let dim = config.dim;
        let inv_norms = doc_vectors
            .chunks(dim)
            .map(|r| {
                let n = (dot(r, r) as f64).sqrt();
                if n > 0.0 {
                    1.0 / n
                } else {
                    0.0
                }
            })
            .collect();
        let doc_index = doc_ids.iter().enumerate().map(|(i, d)| (d.clone(), i)).collect();
        let mut sorted: Vec<usize> = (0..doc_ids.len()).collect();
        sorted.sort_by(|&a, &b| doc_ids[a].cmp(&doc_ids[b]));
        let mut id_rank = vec![0u32; doc_ids.len()];
        for (rank, &i) in sorted.iter().enumerate() {
            id_rank[i] = rank as u32;
        }
        let sampler = NoiseSampler::new(&vocab);
        PvModel {
            config,
            vocab,
            doc_ids,
            doc_index,
            doc_vectors,
            word_output_vectors,
            inv_norms,
            id_rank,
            sampler,
            epoch_losses,
        }
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn row_of(&self, doc_id: &str) -> Result<usize> {
        self.doc_index.get(doc_id).copied().ok_or_else(|| Error::UnknownId(doc_id.to_string()))
    }

    pub fn doc_vector(&self, row: usize) -> &[f32] {
        &self.doc_vectors[row * self.dim()..(row + 1) * self.dim()]
    }

    pub fn doc_vectors(&self) -> &[f32] {
        &self.doc_vectors
    }

    pub fn word_output_vectors(&self) -> &[f32] {
        &self.word_output_vectors
    }

    /// Cosine between two stored title vectors. Zero-norm rows score 0.
    pub fn row_cosine(&self, a: usize, b: usize) -> f64 {
        let d = dot(self.doc_vector(a), self.doc_vector(b)) as f64;
        (d * self.inv_norms[a] * self.inv_norms[b]).clamp(-1.0, 1.0)
    }

    pub fn title_cosine(&self, a: &str, b: &str) -> Result<f64> {
        Ok(self.row_cosine(self.row_of(a)?, self.row_of(b)?))
    }

    /// Exact top-`n` neighbors of a stored title by cosine, excluding the
    /// title itself; ties go to the smaller doc id.
    pub fn neighbors(&self, query_id: &str, n: usize) -> Result<NeighborList> {
        if n == 0 {
            return Err(Error::InvalidArgument("neighbor count must be at least 1".into()));
        }
        let row = self.row_of(query_id)?;
        if self.inv_norms[row] == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(self.neighbors_of_row(row, n))
    }

    pub(crate) fn neighbors_of_row(&self, row: usize, n: usize) -> NeighborList {
        self.neighbors_of_rows(&[row], n).pop().unwrap()
    }

    /// Neighbor lists for a block of query rows. Scanning the table once per
    /// block keeps the scan from being bound by memory bandwidth.
    pub(crate) fn neighbors_of_rows(&self, rows: &[usize], n: usize) -> Vec<NeighborList> {
        let docs = self.num_docs();
        let mut scores = vec![0f64; rows.len() * docs];
        for j in 0..docs {
            let v = self.doc_vector(j);
            for (q, &r) in rows.iter().enumerate() {
                let c = dot(self.doc_vector(r), v) as f64 * self.inv_norms[r] * self.inv_norms[j];
                scores[q * docs + j] = c.clamp(-1.0, 1.0);
            }
        }
        let cmp = |a: &(f64, usize), b: &(f64, usize)| {
            b.0.total_cmp(&a.0).then_with(|| self.id_rank[a.1].cmp(&self.id_rank[b.1]))
        };
        rows.iter()
            .enumerate()
            .map(|(q, &row)| {
                let mut scored: Vec<(f64, usize)> = scores[q * docs..(q + 1) * docs]
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != row)
                    .map(|(j, &c)| (c, j))
                    .collect();
                if scored.len() > n {
                    scored.select_nth_unstable_by(n - 1, cmp);
                    scored.truncate(n);
                }
                scored.sort_unstable_by(cmp);
                NeighborList {
                    query_id: self.doc_ids[row].clone(),
                    entries: scored
                        .into_iter()
                        .map(|(c, j)| Neighbor {
                            doc_id: self.doc_ids[j].clone(),
                            cosine: c,
                        })
                        .collect(),
                }
            })
            .collect()
    }

    /// Neighbor lists for every stored title, in row order.
    pub fn all_neighbors(&self, n: usize) -> Vec<NeighborList> {
        let rows: Vec<usize> = (0..self.num_docs()).collect();
        rows.par_chunks(NEIGHBOR_BLOCK)
            .flat_map_iter(|block| self.neighbors_of_rows(block, n))
            .collect()
    }

    /// Infers a vector for unseen text with the word output vectors frozen.
    /// The initialization and noise samples are seeded from the model seed
    /// and the token sequence, so equal inputs give equal vectors.
    pub fn infer_vector<S: AsRef<str>>(&self, tokens: &[S], steps: usize) -> InferredVector {
        let dim = self.dim();
        let joined = tokens.iter().map(|t| t.as_ref()).collect::<Vec<_>>().join(" ");
        let mut rng = Rng::seed_from_u64(keyed_hash(self.config.seed ^ 0x1f7a_5eed, &joined));
        let mut vector = init_rows(&mut rng, 1, dim);
        let ids: Vec<usize> = self
            .vocab
            .encode(tokens)
            .into_iter()
            .filter(|&t| t != UNK)
            .map(|t| t as usize)
            .collect();
        if !ids.is_empty() && steps > 0 {
            let word_t = FrozenTable(&self.word_output_vectors);
            let doc_t = CellTable(Cell::from_mut(vector.as_mut_slice()).as_slice_of_cells());
            let mut scratch = Scratch::new(dim);
            for step in 0..steps {
                let lr = lr_at(&self.config, step as u64, steps as u64);
                for &w in &ids {
                    train_token(
                        &doc_t,
                        0,
                        &word_t,
                        false,
                        w,
                        &self.sampler,
                        self.config.negative_samples,
                        lr,
                        dim,
                        &mut rng,
                        &mut scratch,
                    );
                }
            }
        }
        InferredVector {
            vector,
            known_tokens: ids.len(),
            all_unknown: ids.is_empty(),
        }
    }

    /// SHA-256 over the serialized model, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        sha256_hex(&buf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let header = PvHeader {
            config: self.config.clone(),
            docs: self.num_docs(),
            vocab_size: self.vocab.len(),
            dim: self.dim(),
            vocab_tokens: self.vocab.tokens().to_vec(),
            vocab_counts: self.vocab.counts().to_vec(),
            epoch_losses: self.epoch_losses.clone(),
        };
        let header = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        write_f32s(w, &self.doc_vectors)?;
        write_f32s(w, &self.word_output_vectors)?;
        let ids = serde_json::to_vec(&self.doc_ids)?;
        w.write_all(&(ids.len() as u64).to_le_bytes())?;
        w.write_all(&ids)
    }

    fn read_from(r: &mut impl Read) -> Result<Self> {
        let io = |e: std::io::Error| Error::Format(format!("truncated model file: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a paragraph-vector model file".into()));
        }
        let header: PvHeader = serde_json::from_slice(&read_block(r).map_err(io)?)?;
        let doc_vectors = read_f32s(r, header.docs * header.dim).map_err(io)?;
        let word_output_vectors = read_f32s(r, header.vocab_size * header.dim).map_err(io)?;
        let doc_ids: Vec<String> = serde_json::from_slice(&read_block(r).map_err(io)?)?;
        if doc_ids.len() != header.docs || header.vocab_tokens.len() != header.vocab_size {
            return Err(Error::Format("model header disagrees with payload".into()));
        }
        let counts: HashMap<String, u64> = header
            .vocab_tokens
            .iter()
            .cloned()
            .zip(header.vocab_counts.iter().copied())
            .collect();
        let vocab = Vocabulary::from_counts(counts, header.config.min_count, usize::MAX - SENTINELS.len());
        if vocab.tokens() != header.vocab_tokens.as_slice() {
            return Err(Error::Format("vocabulary order is not canonical".into()));
        }
        Ok(Self::assemble(
            header.config,
            vocab,
            doc_ids,
            doc_vectors,
            word_output_vectors,
            header.epoch_losses,
        ))
    }
}

#[derive(Serialize, Deserialize)]
struct PvHeader {
    config: PvConfig,
    docs: usize,
    vocab_size: usize,
    dim: usize,
    vocab_tokens: Vec<String>,
    vocab_counts: Vec<u64>,
    epoch_losses: Vec<f64>,
}

fn write_f32s(w: &mut impl Write, xs: &[f32]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 4);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_f32s(r: &mut impl Read, n: usize) -> std::io::Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

fn read_block(r: &mut impl Read) -> std::io::Result<Vec<u8>> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut buf = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut buf)?;
    Ok(buf)
}
