//! Templated synthetic news corpus.
//!
//! Documents come in event clusters. Every document of an event shares the
//! same slots (two actors, a verb, an object and a source) and its title is a
//! different template realization of them, so titles within an event share
//! all slot words but no 4-gram and differ in one connective word. Articles
//! mention the event slots in filler sentences and quote one template
//! realization (with a neutral connective), the document's own with
//! probability `own_title_rate`.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::seed::{Rng, Seeds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub docs: usize,
    pub seed: u64,
    pub min_cluster: usize,
    pub max_cluster: usize,
    pub own_title_rate: f64,
    pub min_article_tokens: usize,
    pub max_article_tokens: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            docs: 25_000,
            seed: 1,
            min_cluster: 6,
            max_cluster: 8,
            own_title_rate: 0.6,
            min_article_tokens: 60,
            max_article_tokens: 100,
        }
    }
}

/// Title word orders over the slots `a v b o s` and a connective `c`. Any
/// two share no 4-gram, so their BLEU against each other is 0.
pub const TITLE_TEMPLATES: [&str; 8] = [
    "{a} {v} {b} {c} {o} {s} says",
    "{v} {c} {o} {b} {s} says {a}",
    "{c} {o} {v} {s} says {b} {a}",
    "{b} {s} says {c} {o} {v} {a}",
    "{b} {a} {s} says {v} {c} {o}",
    "{v} {a} {s} says {b} {c} {o}",
    "{c} {o} {b} {a} {v} {s} says",
    "{s} says {a} {b} {c} {o} {v}",
];

/// Connective of each template in titles. Quotes inside articles use
/// [`QUOTE_CONNECTIVE`] instead, so the connective only shows in titles.
pub const CONNECTIVES: [&str; 8] = ["over", "amid", "about", "against", "despite", "beyond", "regarding", "concerning"];
pub const QUOTE_CONNECTIVE: &str = "on";

const VERBS: [&str; 40] = [
    "rejects", "backs", "warns", "meets", "sues", "hails", "blasts", "courts", "joins", "quits", "urges",
    "slams", "praises", "defies", "snubs", "thanks", "accuses", "outbids", "overtakes", "trails", "targets",
    "confronts", "lobbies", "rebukes", "supports", "challenges", "pressures", "welcomes", "questions",
    "criticises", "endorses", "blocks", "overrules", "threatens", "invites", "mocks", "fines", "probes",
    "rescues", "ousts",
];

const FILLER: [&str; 60] = [
    "the", "a", "of", "in", "on", "and", "to", "for", "with", "at", "by", "from", "that", "was", "were",
    "had", "has", "would", "could", "after", "before", "during", "while", "as", "its", "their", "officials",
    "said", "told", "reporters", "monday", "tuesday", "wednesday", "thursday", "friday", "week", "month",
    "statement", "talks", "meeting", "sources", "government", "spokesman", "analysts", "expected",
    "earlier", "later", "further", "new", "plans", "deal", "report", "issue", "dispute", "agreement",
    "pressure", "crisis", "vote", "council", "ministry",
];

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ra", "ten", "vo", "shi", "na", "dor", "bel", "qua", "zi", "mar", "ul", "fen", "gor",
    "pa", "ris", "tu", "wen", "ash", "ko", "lan", "ve",
];

fn pseudo_word(rng: &mut Rng, syllables: usize) -> String {
    (0..syllables).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

fn word_pool(rng: &mut Rng, n: usize, syllables: usize, taken: &mut std::collections::HashSet<String>) -> Vec<String> {
    // Distinct syllable strings can still spell the same word; stay well below the space size.
    assert!(n * 2 <= SYLLABLES.len().pow(syllables as u32), "pool of {n} words too large");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = pseudo_word(rng, syllables);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

struct Event<'a> {
    a: &'a str,
    b: &'a str,
    v: &'a str,
    o: &'a str,
    s: &'a str,
}

impl Event<'_> {
    fn realize(&self, template: &str, connective: &str) -> String {
        template
            .replace("{c}", connective)
            .replace("{a}", self.a)
            .replace("{b}", self.b)
            .replace("{v}", self.v)
            .replace("{o}", self.o)
            .replace("{s}", self.s)
    }
}

fn filler_sentence(rng: &mut Rng, ev: &Event<'_>, topic: &[String]) -> Vec<String> {
    let len = rng.random_range(6..12);
    let mut words: Vec<String> = (0..len)
        .map(|_| match rng.random_range(0..10) {
            0 => topic.choose(rng).unwrap().clone(),
            1 => [ev.a, ev.b, ev.o].choose(rng).unwrap().to_string(),
            _ => FILLER.choose(rng).unwrap().to_string(),
        })
        .collect();
    words.push(".".into());
    words
}

pub fn generate(cfg: &SynthConfig) -> Result<Corpus> {
    if cfg.docs == 0 {
        return Err(Error::InvalidArgument("synthetic corpus needs at least one document".into()));
    }
    if cfg.min_cluster == 0 || cfg.min_cluster > cfg.max_cluster || cfg.max_cluster > TITLE_TEMPLATES.len() {
        return Err(Error::InvalidArgument(format!(
            "cluster sizes must satisfy 1 <= min <= max <= {}",
            TITLE_TEMPLATES.len()
        )));
    }
    if cfg.min_article_tokens == 0 || cfg.min_article_tokens > cfg.max_article_tokens {
        return Err(Error::InvalidArgument("invalid article length range".into()));
    }
    let mut rng = Seeds::new(cfg.seed).rng("synth");
    let mut taken = std::collections::HashSet::new();
    let events_estimate = cfg.docs / cfg.min_cluster + 1;
    let entities = word_pool(&mut rng, (events_estimate / 2).clamp(50, 4000), 3, &mut taken);
    let objects = word_pool(&mut rng, (events_estimate / 4).clamp(30, 1500), 3, &mut taken);
    let sources = word_pool(&mut rng, 40, 2, &mut taken);
    let topics = word_pool(&mut rng, 300, 3, &mut taken);

    let mut docs = Vec::with_capacity(cfg.docs);
    let mut event_no = 0usize;
    while docs.len() < cfg.docs {
        let size = rng.random_range(cfg.min_cluster..=cfg.max_cluster).min(cfg.docs - docs.len());
        let a = entities.choose(&mut rng).unwrap();
        let b = loop {
            let b = entities.choose(&mut rng).unwrap();
            if b != a {
                break b;
            }
        };
        let ev = Event {
            a,
            b,
            v: VERBS.choose(&mut rng).unwrap(),
            o: objects.choose(&mut rng).unwrap(),
            s: sources.choose(&mut rng).unwrap(),
        };
        let topic: Vec<String> = topics.choose_multiple(&mut rng, 12).cloned().collect();
        let mut templates: Vec<usize> = (0..TITLE_TEMPLATES.len()).collect();
        templates.shuffle(&mut rng);
        for (k, &tpl) in templates.iter().take(size).enumerate() {
            let title = ev.realize(TITLE_TEMPLATES[tpl], CONNECTIVES[tpl]);
            let quoted = if rng.random_bool(cfg.own_title_rate) {
                ev.realize(TITLE_TEMPLATES[tpl], QUOTE_CONNECTIVE)
            } else {
                let other = loop {
                    let t = rng.random_range(0..TITLE_TEMPLATES.len());
                    if t != tpl {
                        break t;
                    }
                };
                ev.realize(TITLE_TEMPLATES[other], QUOTE_CONNECTIVE)
            };
            let target = rng.random_range(cfg.min_article_tokens..=cfg.max_article_tokens);
            let mut sentences: Vec<Vec<String>> = Vec::new();
            let mut len = quoted.split(' ').count() + 1;
            while len < target {
                let s = filler_sentence(&mut rng, &ev, &topic);
                len += s.len();
                sentences.push(s);
            }
            let mut q: Vec<String> = quoted.split(' ').map(str::to_string).collect();
            q.push(".".into());
            let at = rng.random_range(0..=sentences.len());
            sentences.insert(at, q);
            let article = sentences.concat().join(" ").replace(" .", ".");
            docs.push(Document {
                id: format!("syn-{event_no:05}-{k}"),
                title,
                article,
            });
        }
        event_no += 1;
    }
    Corpus::new(docs, format!("synthetic(seed={},docs={})", cfg.seed, cfg.docs))
}
