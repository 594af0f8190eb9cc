use std::collections::HashMap;

use mcgen_core::corpus::{tokenize, Vocabulary, SENTINELS, UNK};
use mcgen_core::mccreate::McInstance;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;

/// Vocabulary over the articles and option titles of `instances`, capped so
/// that sentinels plus words fit in `vocab_size`.
pub fn build_vocab(instances: &[McInstance], vocab_size: usize) -> Vocabulary {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for inst in instances {
        let toks = tokenize(&inst.article)
            .into_iter()
            .chain(inst.options.iter().flat_map(|o| tokenize(o)));
        for t in toks {
            *counts.entry(t).or_default() += 1;
        }
    }
    Vocabulary::from_counts(counts, 1, vocab_size.saturating_sub(SENTINELS.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInstance {
    pub id: String,
    pub article: Vec<u32>,
    pub options: Vec<Vec<u32>>,
    pub gold: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeStats {
    pub instances: usize,
    pub articles_truncated: usize,
    pub titles_truncated: usize,
}

/// Token ids truncated to `max_len`; an empty text becomes a single `<unk>`.
pub fn encode_text(vocab: &Vocabulary, text: &str, max_len: usize) -> (Vec<u32>, bool) {
    let toks = tokenize(text);
    let truncated = toks.len() > max_len;
    let mut ids = vocab.encode(&toks[..toks.len().min(max_len)]);
    if ids.is_empty() {
        ids.push(UNK);
    }
    (ids, truncated)
}

pub fn encode_instances(
    instances: &[McInstance],
    vocab: &Vocabulary,
    cfg: &ModelConfig,
) -> (Vec<EncodedInstance>, EncodeStats) {
    let mut stats = EncodeStats {
        instances: instances.len(),
        ..EncodeStats::default()
    };
    let out = instances
        .iter()
        .map(|inst| {
            let (article, t) = encode_text(vocab, &inst.article, cfg.max_article_len);
            stats.articles_truncated += t as usize;
            let options = inst
                .options
                .iter()
                .map(|o| {
                    let (ids, t) = encode_text(vocab, o, cfg.max_title_len);
                    stats.titles_truncated += t as usize;
                    ids
                })
                .collect();
            EncodedInstance {
                id: inst.id.clone(),
                article,
                options,
                gold: inst.gold_index,
            }
        })
        .collect();
    (out, stats)
}

/// (article, title, label) pairs for the binary models.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairBatch {
    pub articles: Vec<Vec<u32>>,
    pub titles: Vec<Vec<u32>>,
    pub labels: Vec<u8>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, article: &[u32], title: &[u32], label: u8) {
        self.articles.push(article.to_vec());
        self.titles.push(title.to_vec());
        self.labels.push(label);
    }

    pub fn from_pairs(data: &[EncodedInstance], pairs: &[(usize, usize)]) -> Self {
        let mut b = PairBatch::default();
        for &(i, k) in pairs {
            let inst = &data[i];
            b.push(&inst.article, &inst.options[k], (k == inst.gold) as u8);
        }
        b
    }

    /// All options of one instance, in option order.
    pub fn of_instance(inst: &EncodedInstance) -> Self {
        let mut b = PairBatch::default();
        for (k, o) in inst.options.iter().enumerate() {
            b.push(&inst.article, o, (k == inst.gold) as u8);
        }
        b
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        let r = start..start + len;
        PairBatch {
            articles: self.articles[r.clone()].to_vec(),
            titles: self.titles[r.clone()].to_vec(),
            labels: self.labels[r].to_vec(),
        }
    }
}

/// Whole instances for the 5-way model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstanceBatch {
    pub articles: Vec<Vec<u32>>,
    pub options: Vec<Vec<Vec<u32>>>,
    pub gold: Vec<usize>,
}

impl InstanceBatch {
    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }

    pub fn from_instances<'a>(insts: impl IntoIterator<Item = &'a EncodedInstance>) -> Self {
        let mut b = InstanceBatch::default();
        for inst in insts {
            b.articles.push(inst.article.clone());
            b.options.push(inst.options.clone());
            b.gold.push(inst.gold);
        }
        b
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        let r = start..start + len;
        InstanceBatch {
            articles: self.articles[r.clone()].to_vec(),
            options: self.options[r.clone()].to_vec(),
            gold: self.gold[r].to_vec(),
        }
    }
}
