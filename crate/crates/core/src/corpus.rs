//! Corpus ingestion, tokenization and vocabularies.
//!
//! Corpora are JSON Lines files with one `{"id","title","article"}` object per
//! line. Vocabularies persist as TSV rows `token<TAB>id<TAB>count`.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const SENTINELS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Identifies the tokenizer in dataset provenance so outputs stay comparable.
pub const TOKENIZER_TAG: &str = "lowercase+whitespace+edge-ascii-punct/v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub article: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Corpus {
    pub docs: Vec<Document>,
    pub source_tag: String,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids.
    pub fn new(docs: Vec<Document>, source_tag: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(docs.len());
        for d in &docs {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate document id `{}`", d.id)));
            }
        }
        Ok(Corpus {
            docs,
            source_tag: source_tag.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn index_by_id(&self) -> HashMap<&str, usize> {
        self.docs.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect()
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for d in &self.docs {
            serde_json::to_writer(&mut w, d)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub lines: usize,
    pub kept: usize,
    pub malformed: usize,
    pub invalid: usize,
    pub duplicate: usize,
}

impl IngestStats {
    pub fn skipped(&self) -> usize {
        self.malformed + self.invalid + self.duplicate
    }
}

#[derive(Deserialize)]
struct RawDocument {
    id: String,
    title: String,
    article: String,
}

/// Reads a JSONL corpus. Malformed or invalid lines are skipped and tallied;
/// only an unreadable file is fatal. `limit` caps the number of kept documents.
pub fn ingest(path: impl AsRef<Path>, limit: Option<usize>) -> Result<(Corpus, IngestStats)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut stats = IngestStats::default();
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for line in BufReader::new(file).lines() {
        if limit.is_some_and(|l| docs.len() >= l) {
            break;
        }
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        let raw: RawDocument = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(_) => {
                stats.malformed += 1;
                continue;
            }
        };
        if raw.id.trim().is_empty() || tokenize(&raw.title).is_empty() || tokenize(&raw.article).is_empty() {
            stats.invalid += 1;
            continue;
        }
        if !seen.insert(raw.id.clone()) {
            stats.duplicate += 1;
            continue;
        }
        docs.push(Document {
            id: raw.id,
            title: raw.title,
            article: raw.article,
        });
    }
    stats.kept = docs.len();
    let tag = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    Ok((Corpus { docs, source_tag: tag }, stats))
}

/// Lowercases, splits on Unicode whitespace, and peels leading and trailing
/// ASCII punctuation off each chunk as single-character tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let lower = chunk.to_lowercase();
        let chars: Vec<char> = lower.chars().collect();
        let start = chars.iter().position(|c| !c.is_ascii_punctuation());
        let Some(start) = start else {
            out.extend(chars.iter().map(|c| c.to_string()));
            continue;
        };
        let end = chars.iter().rposition(|c| !c.is_ascii_punctuation()).unwrap() + 1;
        out.extend(chars[..start].iter().map(|c| c.to_string()));
        out.push(chars[start..end].iter().collect());
        out.extend(chars[end..].iter().map(|c| c.to_string()));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fields {
    Title,
    Article,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    #[serde(skip)]
    index: HashMap<String, u32>,
    pub min_count: u64,
    pub max_types: usize,
}

impl Vocabulary {
    /// Counts tokens over the chosen fields, keeps those with `count >= min_count`,
    /// sorts by (count desc, token asc) and truncates to `max_types`.
    pub fn build(corpus: &Corpus, fields: Fields, min_count: u64, max_types: usize) -> Result<Self> {
        if min_count < 1 {
            return Err(Error::InvalidArgument("min_count must be at least 1".into()));
        }
        if corpus.is_empty() {
            return Err(Error::Empty("corpus".into()));
        }
        let counts = corpus
            .docs
            .par_iter()
            .fold(HashMap::<String, u64>::new, |mut acc, d| {
                let mut bump = |text: &str| {
                    for t in tokenize(text) {
                        *acc.entry(t).or_default() += 1;
                    }
                };
                if matches!(fields, Fields::Title | Fields::Both) {
                    bump(&d.title);
                }
                if matches!(fields, Fields::Article | Fields::Both) {
                    bump(&d.article);
                }
                acc
            })
            .reduce(HashMap::new, |mut a, b| {
                for (k, v) in b {
                    *a.entry(k).or_default() += v;
                }
                a
            });
        Ok(Self::from_counts(counts, min_count, max_types))
    }

    pub fn from_counts(counts: HashMap<String, u64>, min_count: u64, max_types: usize) -> Self {
        let mut kept: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_count && !SENTINELS.contains(&t.as_str()))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        kept.truncate(max_types);
        let mut tokens: Vec<String> = SENTINELS.iter().map(|s| s.to_string()).collect();
        let mut cs = vec![0u64; SENTINELS.len()];
        for (t, c) in kept {
            tokens.push(t);
            cs.push(c);
        }
        let mut v = Vocabulary {
            tokens,
            counts: cs,
            index: HashMap::new(),
            min_count,
            max_types,
        };
        v.reindex();
        v
    }

    fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= SENTINELS.len()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts.get(id as usize).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref()).unwrap_or(UNK)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(SENTINELS[UNK as usize]).to_string())
            .collect()
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (i, (t, c)) in self.tokens.iter().zip(&self.counts).enumerate() {
            writeln!(w, "{t}\t{i}\t{c}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_tsv(path: impl AsRef<Path>, min_count: u64, max_types: usize) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut tokens = Vec::new();
        let mut counts = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut parts = line.split('\t');
            let (Some(tok), Some(id), Some(count), None) = (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::Format(format!("vocab line {}: expected 3 columns", lineno + 1)));
            };
            let id: usize = id
                .parse()
                .map_err(|_| Error::Format(format!("vocab line {}: bad id", lineno + 1)))?;
            if id != tokens.len() {
                return Err(Error::Format(format!("vocab line {}: ids must be dense", lineno + 1)));
            }
            let count: u64 = count
                .parse()
                .map_err(|_| Error::Format(format!("vocab line {}: bad count", lineno + 1)))?;
            tokens.push(tok.to_string());
            counts.push(count);
        }
        if tokens.len() < SENTINELS.len() || tokens[..SENTINELS.len()] != SENTINELS {
            return Err(Error::Format("vocab must start with the four sentinels".into()));
        }
        let mut v = Vocabulary {
            tokens,
            counts,
            index: HashMap::new(),
            min_count,
            max_types,
        };
        v.reindex();
        Ok(v)
    }
}
