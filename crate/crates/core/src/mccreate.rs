//! Decoy scoring and multiple-choice instance assembly.
//!
//! For every (title, article) pair the N nearest titles in paragraph-vector
//! space are scored as decoy candidates:
//!
//! ```text
//! score(t', <t, a>) = 0                                   if bleu(t', t) >= L
//!                   = max(0, λe·cos(t', t) + λs·bleu(t', t) + (1-λs)·bleu(t', a))
//! ```
//!
//! Positive-scoring candidates are ranked by (score desc, doc id asc); when at
//! least `nr_decoys` remain, the top ones become the decoys of a 5-way instance
//! whose option order is shuffled from the seed.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus, TOKENIZER_TAG};
use crate::error::{Error, Result};
use crate::pvdbow::{PvModel, NEIGHBOR_BLOCK};
use crate::seed::{item_rng, keyed_hash, Seeds};
use crate::textmetrics::{bleu, BleuConfig, BleuReference};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCreateConfig {
    /// Paragraph-vector neighborhood size N.
    pub neighborhood: usize,
    pub nr_decoys: usize,
    pub lambda_e: f64,
    pub lambda_s: f64,
    /// Surface-similarity guard L.
    pub surface_threshold: f64,
    pub seed: u64,
    /// (train, dev, test), summing to 1.
    pub split_ratios: [f64; 3],
    pub bleu: BleuConfig,
    /// Drops dev/test instances whose gold title reaches this BLEU against
    /// any train gold title. Off when `None`.
    pub cross_split_bleu_filter: Option<f64>,
}

impl Default for McCreateConfig {
    fn default() -> Self {
        McCreateConfig {
            neighborhood: 100,
            nr_decoys: 4,
            lambda_e: 1.0,
            lambda_s: 0.5,
            surface_threshold: 0.5,
            seed: 1,
            split_ratios: [0.8, 0.1, 0.1],
            bleu: BleuConfig::default(),
            cross_split_bleu_filter: None,
        }
    }
}

impl McCreateConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.nr_decoys == 0 || self.neighborhood < self.nr_decoys {
            return bad("need neighborhood >= nr_decoys >= 1");
        }
        if !(self.surface_threshold > 0.0 && self.surface_threshold <= 1.0) {
            return bad("surface threshold L must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda_s) {
            return bad("lambda_s must be in [0, 1]");
        }
        validate_ratios(&self.split_ratios)?;
        self.bleu.validate()
    }
}

fn validate_ratios(r: &[f64; 3]) -> Result<()> {
    if r.iter().any(|x| !(0.0..=1.0).contains(x)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("split ratios {r:?} must be non-negative and sum to 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidArgument(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Pv,
    Rnd,
    Combined,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Pv => "pv",
            Variant::Rnd => "rnd",
            Variant::Combined => "combined",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pv" => Ok(Variant::Pv),
            "rnd" => Ok(Variant::Rnd),
            "combined" => Ok(Variant::Combined),
            _ => Err(Error::InvalidArgument(format!("unknown variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub title_id: String,
    pub score: f64,
}

/// One multiple-choice instance. The instance id is the id of the source
/// document, whose title is the gold option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McInstance {
    pub id: String,
    pub article: String,
    pub options: Vec<String>,
    #[serde(rename = "label")]
    pub gold_index: usize,
    pub decoy_scores: Vec<f64>,
    pub decoy_ids: Vec<String>,
    pub split: Split,
    pub variant: Variant,
}

impl McInstance {
    pub fn article_tokens(&self) -> Vec<String> {
        tokenize(&self.article)
    }

    pub fn option_tokens(&self) -> Vec<Vec<String>> {
        self.options.iter().map(|o| tokenize(o)).collect()
    }

    pub fn gold(&self) -> &str {
        &self.options[self.gold_index]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: McCreateConfig,
    pub tokenizer: String,
    pub pv_model: String,
    pub corpus_source: String,
    pub corpus_docs: usize,
    pub variant: Variant,
    pub emitted: usize,
    /// Documents whose neighborhood yielded fewer than `nr_decoys` decoys.
    pub too_few_decoys: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McDataset {
    pub instances: Vec<McInstance>,
    pub provenance: Provenance,
}

/// The weighted combination with the non-negativity floor; the surface
/// guard is applied by the caller.
pub fn combine_similarities(cosine: f64, bleu_title: f64, bleu_article: f64, cfg: &McCreateConfig) -> f64 {
    let s = cfg.lambda_e * cosine + cfg.lambda_s * bleu_title + (1.0 - cfg.lambda_s) * bleu_article;
    s.max(0.0)
}

/// Decoy score of candidate title `candidate_id` for the pair whose title is
/// `target_id`. Both titles must be stored in the paragraph-vector model.
pub fn score<S: AsRef<str> + Eq + std::hash::Hash>(
    pv: &PvModel,
    candidate_id: &str,
    target_id: &str,
    candidate_title: &[S],
    target_title: &[S],
    target_article: &[S],
    cfg: &McCreateConfig,
) -> Result<f64> {
    let cos = pv.title_cosine(candidate_id, target_id)?;
    let bt = bleu(candidate_title, target_title, &cfg.bleu);
    if bt >= cfg.surface_threshold {
        return Ok(0.0);
    }
    let ba = bleu(candidate_title, target_article, &cfg.bleu);
    Ok(combine_similarities(cos, bt, ba, cfg))
}

/// Token sequences interned to ids for fast n-gram hashing.
struct Encoded {
    titles: Vec<Vec<u32>>,
    articles: Vec<Vec<u32>>,
}

fn encode_corpus(corpus: &Corpus) -> Encoded {
    let mut dict: HashMap<String, u32> = HashMap::new();
    let mut enc = |text: &str| -> Vec<u32> {
        tokenize(text)
            .into_iter()
            .map(|t| {
                let n = dict.len() as u32;
                *dict.entry(t).or_insert(n)
            })
            .collect()
    };
    let titles = corpus.docs.iter().map(|d| enc(&d.title)).collect();
    let articles = corpus.docs.iter().map(|d| enc(&d.article)).collect();
    Encoded { titles, articles }
}

fn shuffled_options(gold: String, decoys: Vec<String>, rng: &mut crate::seed::Rng) -> (Vec<String>, usize) {
    let mut options: Vec<(bool, String)> = std::iter::once((true, gold))
        .chain(decoys.into_iter().map(|d| (false, d)))
        .collect();
    options.shuffle(rng);
    let gold_index = options.iter().position(|(g, _)| *g).unwrap();
    (options.into_iter().map(|(_, o)| o).collect(), gold_index)
}

/// Runs decoy selection over the whole corpus.
pub fn build_dataset(corpus: &Corpus, pv: &PvModel, cfg: &McCreateConfig) -> Result<McDataset> {
    cfg.validate()?;
    let rows: Vec<usize> = corpus.docs.iter().map(|d| pv.row_of(&d.id)).collect::<Result<_>>()?;
    let by_row: HashMap<usize, usize> = rows.iter().enumerate().map(|(i, &r)| (r, i)).collect();
    let enc = encode_corpus(corpus);
    let seeds = Seeds::new(cfg.seed);
    let shuffle_seed = seeds.stream("shuffle");

    let indices: Vec<usize> = (0..corpus.len()).collect();
    let built: Vec<Option<McInstance>> = indices
        .par_chunks(NEIGHBOR_BLOCK)
        .flat_map_iter(|block| {
            let block_rows: Vec<usize> = block.iter().map(|&i| rows[i]).collect();
            block.iter().copied().zip(pv.neighbors_of_rows(&block_rows, cfg.neighborhood))
        })
        .map(|(i, neighbors)| {
            let doc = &corpus.docs[i];
            let article_ref = BleuReference::new(&enc.articles[i], cfg.bleu.max_order);
            let title = &enc.titles[i];
            let mut scored: Vec<(f64, usize)> = Vec::new();
            for nb in &neighbors.entries {
                // Neighbors outside the corpus cannot be scored as pairs.
                let Some(&j) = pv.row_of(&nb.doc_id).ok().and_then(|r| by_row.get(&r)) else {
                    continue;
                };
                let cand = &enc.titles[j];
                let bt = bleu(cand.as_slice(), title.as_slice(), &cfg.bleu);
                if bt >= cfg.surface_threshold {
                    continue;
                }
                let ba = article_ref.bleu(cand, &cfg.bleu);
                let s = combine_similarities(pv.row_cosine(rows[i], rows[j]), bt, ba, cfg);
                if s > 0.0 {
                    scored.push((s, j));
                }
            }
            scored.sort_by(|a, b| {
                b.0.total_cmp(&a.0)
                    .then_with(|| corpus.docs[a.1].id.cmp(&corpus.docs[b.1].id))
            });
            // Textually identical candidates would make indistinguishable options.
            let mut seen: HashSet<&[u32]> = HashSet::new();
            seen.insert(title.as_slice());
            let picked: Vec<(f64, usize)> = scored
                .into_iter()
                .filter(|&(_, j)| seen.insert(enc.titles[j].as_slice()))
                .take(cfg.nr_decoys)
                .collect();
            if picked.len() < cfg.nr_decoys {
                return None;
            }
            let mut rng = item_rng(shuffle_seed, &doc.id);
            let decoys = picked.iter().map(|&(_, j)| corpus.docs[j].title.clone()).collect();
            let (options, gold_index) = shuffled_options(doc.title.clone(), decoys, &mut rng);
            Some(McInstance {
                id: doc.id.clone(),
                article: doc.article.clone(),
                options,
                gold_index,
                decoy_scores: picked.iter().map(|p| p.0).collect(),
                decoy_ids: picked.iter().map(|&(_, j)| corpus.docs[j].id.clone()).collect(),
                split: Split::Train,
                variant: Variant::Pv,
            })
        })
        .collect();

    let too_few = built.iter().filter(|b| b.is_none()).count();
    let mut instances: Vec<McInstance> = built.into_iter().flatten().collect();
    instances.sort_by(|a, b| a.id.cmp(&b.id));
    let emitted = instances.len();
    let ds = McDataset {
        instances,
        provenance: Provenance {
            config: cfg.clone(),
            tokenizer: TOKENIZER_TAG.to_string(),
            pv_model: pv.fingerprint(),
            corpus_source: corpus.source_tag.clone(),
            corpus_docs: corpus.len(),
            variant: Variant::Pv,
            emitted,
            too_few_decoys: too_few,
        },
    };
    let mut ds = assign_splits(ds, cfg.split_ratios, cfg.seed)?;
    if let Some(threshold) = cfg.cross_split_bleu_filter {
        ds = cross_split_filter(ds, threshold, &cfg.bleu);
    }
    Ok(ds)
}

/// Assigns splits by ranking instance ids under a keyed hash. The result
/// depends only on the id set, so reordering the dataset changes nothing;
/// split sizes are the rounded ratio targets.
pub fn assign_splits(mut ds: McDataset, ratios: [f64; 3], seed: u64) -> Result<McDataset> {
    validate_ratios(&ratios)?;
    let key = Seeds::new(seed).stream("split");
    let n = ds.instances.len();
    let mut order: Vec<(u64, usize)> = ds
        .instances
        .iter()
        .enumerate()
        .map(|(i, inst)| (keyed_hash(key, &inst.id), i))
        .collect();
    order.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| ds.instances[a.1].id.cmp(&ds.instances[b.1].id)));
    let n_train = (ratios[0] * n as f64).round() as usize;
    let n_dev = ((ratios[1] * n as f64).round() as usize).min(n - n_train.min(n));
    for (rank, &(_, i)) in order.iter().enumerate() {
        ds.instances[i].split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
    }
    ds.provenance.config.split_ratios = ratios;
    Ok(ds)
}

fn cross_split_filter(mut ds: McDataset, threshold: f64, cfg: &BleuConfig) -> McDataset {
    let train: Vec<Vec<String>> = ds
        .instances
        .iter()
        .filter(|i| i.split == Split::Train)
        .map(|i| tokenize(i.gold()))
        .collect();
    ds.instances.retain(|inst| {
        if inst.split == Split::Train {
            return true;
        }
        let g = tokenize(inst.gold());
        !train.par_iter().any(|t| bleu(&g, t, cfg) >= threshold)
    });
    ds.provenance.emitted = ds.instances.len();
    ds
}

/// Replaces every instance's decoys with titles drawn uniformly from the
/// corpus (distinct, not the gold, under the surface guard). Splits are kept.
pub fn build_rnd_dataset(corpus: &Corpus, base: &McDataset, seed: u64) -> Result<McDataset> {
    let cfg = &base.provenance.config;
    if corpus.len() <= cfg.nr_decoys {
        return Err(Error::InvalidArgument(format!(
            "corpus of {} documents is too small to sample {} decoys",
            corpus.len(),
            cfg.nr_decoys
        )));
    }
    let index = corpus.index_by_id();
    let titles: Vec<Vec<String>> = corpus.docs.iter().map(|d| tokenize(&d.title)).collect();
    let stream = Seeds::new(seed).stream("sample");
    let max_attempts = 1000 * cfg.nr_decoys;
    let instances = base
        .instances
        .par_iter()
        .map(|inst| {
            let &gi = index.get(inst.id.as_str()).ok_or_else(|| Error::UnknownId(inst.id.clone()))?;
            let gold = &titles[gi];
            let mut rng = item_rng(stream, &inst.id);
            let mut picked: Vec<usize> = Vec::with_capacity(cfg.nr_decoys);
            let mut attempts = 0;
            while picked.len() < cfg.nr_decoys {
                attempts += 1;
                if attempts > max_attempts {
                    return Err(Error::InvalidArgument(format!(
                        "could not sample {} random decoys for `{}`",
                        cfg.nr_decoys, inst.id
                    )));
                }
                let j = rng.random_range(0..corpus.len());
                if j == gi || picked.iter().any(|&p| titles[p] == titles[j]) || titles[j] == *gold {
                    continue;
                }
                if bleu(&titles[j], gold, &cfg.bleu) >= cfg.surface_threshold {
                    continue;
                }
                picked.push(j);
            }
            let decoys = picked.iter().map(|&j| corpus.docs[j].title.clone()).collect();
            let (options, gold_index) = shuffled_options(corpus.docs[gi].title.clone(), decoys, &mut rng);
            Ok(McInstance {
                id: inst.id.clone(),
                article: inst.article.clone(),
                options,
                gold_index,
                decoy_scores: Vec::new(),
                decoy_ids: picked.iter().map(|&j| corpus.docs[j].id.clone()).collect(),
                split: inst.split,
                variant: Variant::Rnd,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut provenance = base.provenance.clone();
    provenance.variant = Variant::Rnd;
    provenance.config.seed = seed;
    Ok(McDataset { instances, provenance })
}

/// Merges a paragraph-vector dataset and its random-decoy counterpart into
/// 1-gold / 2×nr_decoys-decoy training instances.
pub fn combine(base: &McDataset, rnd: &McDataset) -> Result<McDataset> {
    if base.instances.len() != rnd.instances.len() {
        return Err(Error::InvalidArgument("datasets differ in size".into()));
    }
    let stream = Seeds::new(base.provenance.config.seed).stream("combine");
    let instances = base
        .instances
        .iter()
        .zip(&rnd.instances)
        .map(|(b, r)| {
            if b.id != r.id || b.gold() != r.gold() {
                return Err(Error::InvalidArgument(format!("instance mismatch: `{}` vs `{}`", b.id, r.id)));
            }
            let decoys = b
                .options
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != b.gold_index)
                .chain(r.options.iter().enumerate().filter(|&(k, _)| k != r.gold_index))
                .map(|(_, o)| o.clone())
                .collect();
            let mut rng = item_rng(stream, &b.id);
            let (options, gold_index) = shuffled_options(b.gold().to_string(), decoys, &mut rng);
            Ok(McInstance {
                id: b.id.clone(),
                article: b.article.clone(),
                options,
                gold_index,
                decoy_scores: b.decoy_scores.clone(),
                decoy_ids: b.decoy_ids.iter().chain(&r.decoy_ids).cloned().collect(),
                split: b.split,
                variant: Variant::Combined,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut provenance = base.provenance.clone();
    provenance.variant = Variant::Combined;
    Ok(McDataset { instances, provenance })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairOrder {
    Grouped,
    Shuffled,
}

/// One (title, article) classification example.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pair {
    pub instance_id: String,
    pub option_index: usize,
    pub title: String,
    pub article: String,
    pub label: u8,
}

/// (instance index, option index) for every pair, grouped per instance or
/// globally permuted by the seed.
pub fn pair_order(option_counts: &[usize], order: PairOrder, seed: u64) -> Vec<(usize, usize)> {
    let mut idx: Vec<(usize, usize)> = option_counts
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| (0..n).map(move |k| (i, k)))
        .collect();
    if order == PairOrder::Shuffled {
        idx.shuffle(&mut Seeds::new(seed).rng("shuffle-pairs"));
    }
    idx
}

/// Flattens instances into labelled pairs in [`pair_order`].
pub fn export_pairs(ds: &McDataset, order: PairOrder, seed: u64) -> Result<Vec<Pair>> {
    if ds.instances.is_empty() {
        return Err(Error::Empty("dataset".into()));
    }
    let counts: Vec<usize> = ds.instances.iter().map(|i| i.options.len()).collect();
    Ok(pair_order(&counts, order, seed)
        .into_iter()
        .map(|(i, k)| {
            let inst = &ds.instances[i];
            Pair {
                instance_id: inst.id.clone(),
                option_index: k,
                title: inst.options[k].clone(),
                article: inst.article.clone(),
                label: (k == inst.gold_index) as u8,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checked: usize,
    pub failures: Vec<(String, String)>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn pass_rate(&self) -> f64 {
        if self.checked == 0 {
            return 1.0;
        }
        1.0 - self.failures.len() as f64 / self.checked as f64
    }
}

/// Re-checks every instance invariant, recomputing decoy scores from the
/// corpus and paragraph-vector model.
pub fn validate_dataset(ds: &McDataset, corpus: &Corpus, pv: &PvModel) -> ValidationReport {
    let cfg = &ds.provenance.config;
    let index = corpus.index_by_id();
    let mut report = ValidationReport::default();
    let mut ids = HashSet::new();
    for inst in &ds.instances {
        report.checked += 1;
        let dup = !ids.insert(inst.id.as_str());
        if let Err(reason) = check_instance(inst, corpus, &index, pv, cfg).and_then(|_| {
            if dup {
                Err("duplicate instance id".to_string())
            } else {
                Ok(())
            }
        }) {
            report.failures.push((inst.id.clone(), reason));
        }
    }
    report
}

fn check_instance(
    inst: &McInstance,
    corpus: &Corpus,
    index: &HashMap<&str, usize>,
    pv: &PvModel,
    cfg: &McCreateConfig,
) -> std::result::Result<(), String> {
    let expected_options = match inst.variant {
        Variant::Pv | Variant::Rnd => cfg.nr_decoys + 1,
        Variant::Combined => 2 * cfg.nr_decoys + 1,
    };
    if inst.options.len() != expected_options {
        return Err(format!("{} options, expected {expected_options}", inst.options.len()));
    }
    if inst.gold_index >= inst.options.len() {
        return Err("gold index out of range".into());
    }
    let &gi = index.get(inst.id.as_str()).ok_or("instance id not in corpus")?;
    let gold_doc = &corpus.docs[gi];
    if inst.gold() != gold_doc.title || inst.article != gold_doc.article {
        return Err("gold option or article differs from the source document".into());
    }
    let tokens = inst.option_tokens();
    let gold_tokens = &tokens[inst.gold_index];
    if tokens.iter().filter(|t| *t == gold_tokens).count() != 1 {
        return Err("gold text appears more than once".into());
    }
    if inst.variant != Variant::Combined {
        let distinct: HashSet<&Vec<String>> = tokens.iter().collect();
        if distinct.len() != tokens.len() {
            return Err("two options are textually identical".into());
        }
    }
    let decoy_count = match inst.variant {
        Variant::Combined => 2 * cfg.nr_decoys,
        _ => cfg.nr_decoys,
    };
    if inst.decoy_ids.len() != decoy_count {
        return Err(format!("{} decoy ids, expected {decoy_count}", inst.decoy_ids.len()));
    }
    let mut remaining: Vec<&String> = inst
        .options
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != inst.gold_index)
        .map(|(_, o)| o)
        .collect();
    for did in &inst.decoy_ids {
        let &j = index.get(did.as_str()).ok_or_else(|| format!("decoy `{did}` not in corpus"))?;
        if j == gi {
            return Err("gold document used as its own decoy".into());
        }
        let pos = remaining
            .iter()
            .position(|o| **o == corpus.docs[j].title)
            .ok_or_else(|| format!("decoy `{did}` is not among the options"))?;
        remaining.swap_remove(pos);
        if bleu(&tokenize(&corpus.docs[j].title), gold_tokens, &cfg.bleu) >= cfg.surface_threshold {
            return Err(format!("decoy `{did}` violates the surface guard"));
        }
    }
    if inst.variant == Variant::Pv {
        if inst.decoy_scores.len() != cfg.nr_decoys {
            return Err("wrong number of decoy scores".into());
        }
        if inst.decoy_scores.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err("non-positive decoy score".into());
        }
        if inst.decoy_scores.windows(2).any(|w| w[1] > w[0]) {
            return Err("decoy scores are not in descending order".into());
        }
        let article = tokenize(&gold_doc.article);
        for (did, &stored) in inst.decoy_ids.iter().zip(&inst.decoy_scores) {
            let cand = tokenize(&corpus.docs[index[did.as_str()]].title);
            let s = score(pv, did, &inst.id, &cand, gold_tokens, &article, cfg).map_err(|e| e.to_string())?;
            if (s - stored).abs() > 1e-6 {
                return Err(format!("decoy `{did}` score {stored} recomputes to {s}"));
            }
        }
    }
    Ok(())
}

impl McDataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &McInstance> {
        self.instances.iter().filter(move |i| i.split == split)
    }

    pub fn subset(&self, split: Split) -> McDataset {
        McDataset {
            instances: self.split(split).cloned().collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Writes instances as JSONL and the provenance as a JSON sidecar at
    /// `<path>.provenance.json`.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for inst in &self.instances {
            serde_json::to_writer(&mut w, inst)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let side = provenance_path(path);
        let json = serde_json::to_vec_pretty(&self.provenance)?;
        std::fs::write(&side, json).map_err(|e| Error::io(side, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side = provenance_path(path);
        let provenance: Provenance =
            serde_json::from_slice(&std::fs::read(&side).map_err(|e| Error::io(&side, e))?)?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut instances = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let inst: McInstance = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1)))?;
            if inst.gold_index >= inst.options.len() {
                return Err(Error::Format(format!("{}:{}: label out of range", path.display(), n + 1)));
            }
            instances.push(inst);
        }
        Ok(McDataset { instances, provenance })
    }
}

pub fn provenance_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".provenance.json");
    s.into()
}
