//! Independent oracles shared by the integration tests and the acceptance
//! suite. Nothing here calls the scoring code under test.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use mcgen_core::corpus::{tokenize, Corpus};
use mcgen_core::mccreate::McCreateConfig;
use mcgen_core::pvdbow::{train_pv, PvConfig, PvModel};
use mcgen_core::synth::{generate, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

pub fn toks(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

pub struct BleuCase {
    pub candidate: &'static str,
    pub reference: &'static str,
    pub max_order: usize,
    pub expected: f64,
}

fn geo(p: &[f64]) -> f64 {
    p.iter().product::<f64>().powf(1.0 / p.len() as f64)
}

/// Expected values from clipped precisions counted by hand.
pub fn bleu_cases() -> Vec<BleuCase> {
    let c = |candidate, reference, max_order, expected| BleuCase {
        candidate,
        reference,
        max_order,
        expected,
    };
    vec![
        c("a b c d e f", "a b c d e f", 4, 1.0),
        c("a b", "a b", 4, 1.0),
        c("a b c d", "a b c e", 4, 0.0),
        c("", "a b", 4, 0.0),
        c("a", "a b c", 4, 1.0),
        c("x", "a b", 4, 0.0),
        c("a b c d", "a b c e", 3, geo(&[3.0 / 4.0, 2.0 / 3.0, 1.0 / 2.0])),
        c("the the the the", "the cat", 4, 0.0),
        c("the the the the", "the cat", 1, 1.0 / 4.0),
        c("a b a b", "a b", 2, geo(&[2.0 / 4.0, 1.0 / 3.0])),
        c("a b c", "c b a", 4, 0.0),
        c("a b c", "c b a", 1, 1.0),
        c(
            "a b c d e",
            "a b c d f",
            4,
            geo(&[4.0 / 5.0, 3.0 / 4.0, 2.0 / 3.0, 1.0 / 2.0]),
        ),
        c("a b c", "x a b c y", 4, 1.0),
        c("a b c d", "a b x c d", 4, 0.0),
        c("a b c d", "a b x c d", 2, geo(&[1.0, 2.0 / 3.0])),
        c("a a b b", "a b b a", 2, geo(&[1.0, 2.0 / 3.0])),
        c("a b c d e f g h", "a b c d e f g h", 9, 1.0),
        c(
            "a b c d e f",
            "a b c d x y",
            4,
            geo(&[4.0 / 6.0, 3.0 / 5.0, 2.0 / 4.0, 1.0 / 3.0]),
        ),
        c("a b c d e", "a b", 2, geo(&[2.0 / 5.0, 1.0 / 4.0])),
    ]
}

/// Full-table dynamic-programming LCS.
pub fn lcs_table<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t[a.len()][b.len()]
}

pub fn rouge_oracle<T: Eq>(c: &[T], r: &[T]) -> f64 {
    let l = lcs_table(c, r) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / c.len() as f64;
    let q = l / r.len() as f64;
    2.0 * p * q / (p + q)
}

/// Twenty (candidate, reference) pairs: a few fixed, the rest seeded random
/// strings over a small alphabet.
pub fn rouge_cases() -> Vec<(Vec<String>, Vec<String>)> {
    let s = |x: &str| x.split_whitespace().map(String::from).collect::<Vec<_>>();
    let mut out = vec![
        (s("a b c d"), s("a c b d")),
        (s("a b c"), s("a b c")),
        (s("a b c"), s("x y z")),
        (s("the cat sat on the mat"), s("the cat lay on a mat")),
        (s("a"), s("b a b")),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    while out.len() < 20 {
        let mut w = |n: usize| {
            (0..n)
                .map(|_| ((b'a' + rng.random_range(0..5u8)) as char).to_string())
                .collect()
        };
        let (n, m) = (1 + out.len() % 9, 2 + (out.len() * 7) % 11);
        out.push((w(n), w(m)));
    }
    out
}

/// Posterior std of the mean of independent Beta(1+c, 1+t-c) variables.
pub fn errorbar_closed_form(correct: &[u64], total: &[u64]) -> f64 {
    let k = correct.len() as f64;
    let var: f64 = correct
        .iter()
        .zip(total)
        .map(|(&c, &t)| {
            let (a, b) = (1.0 + c as f64, 1.0 + (t - c) as f64);
            a * b / ((a + b).powi(2) * (a + b + 1.0))
        })
        .sum();
    var.sqrt() / k
}

/// Monte Carlo estimate drawing each Beta as a ratio of Gamma variables.
pub fn errorbar_monte_carlo(correct: &[u64], total: &[u64], samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gammas: Vec<(Gamma<f64>, Gamma<f64>)> = correct
        .iter()
        .zip(total)
        .map(|(&c, &t)| {
            (
                Gamma::new(1.0 + c as f64, 1.0).unwrap(),
                Gamma::new(1.0 + (t - c) as f64, 1.0).unwrap(),
            )
        })
        .collect();
    let draws: Vec<f64> = (0..samples)
        .map(|_| {
            gammas
                .iter()
                .map(|(ga, gb)| {
                    let x = ga.sample(&mut rng);
                    x / (x + gb.sample(&mut rng))
                })
                .sum::<f64>()
                / gammas.len() as f64
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / samples as f64;
    (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (samples - 1) as f64).sqrt()
}

/// Unsmoothed BLEU with brevity penalty 1, written out longhand.
pub fn plain_bleu(c: &[String], r: &[String], max_order: usize) -> f64 {
    let order = max_order.min(c.len());
    if order == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=order {
        let grams = |x: &[String]| {
            let mut m: HashMap<Vec<String>, usize> = HashMap::new();
            for i in 0..x.len().saturating_sub(n - 1) {
                *m.entry(x[i..i + n].to_vec()).or_default() += 1;
            }
            m
        };
        let (cg, rg) = (grams(c), grams(r));
        let matched: usize = cg.iter().map(|(g, &k)| k.min(rg.get(g).copied().unwrap_or(0))).sum();
        if matched == 0 {
            return 0.0;
        }
        log_sum += (matched as f64 / (c.len() - n + 1) as f64).ln();
    }
    (log_sum / order as f64).exp()
}

fn cos64(u: &[f32], v: &[f32]) -> f64 {
    let d: f64 = u.iter().zip(v).map(|(a, b)| *a as f64 * *b as f64).sum();
    let nu: f64 = u.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (d / (nu * nv)).clamp(-1.0, 1.0)
}

/// Decoy selection done one document at a time: brute-force neighbors, the
/// guarded weighted score, descending sort, top `nr_decoys` with distinct
/// text. Returns (decoy ids, decoy scores) per emitted document id.
pub fn decoy_oracle(corpus: &Corpus, pv: &PvModel, cfg: &McCreateConfig) -> BTreeMap<String, (Vec<String>, Vec<f64>)> {
    let titles: Vec<Vec<String>> = corpus.docs.iter().map(|d| tokenize(&d.title)).collect();
    let articles: Vec<Vec<String>> = corpus.docs.iter().map(|d| tokenize(&d.article)).collect();
    let vec_of = |i: usize| pv.doc_vector(pv.row_of(&corpus.docs[i].id).unwrap());
    let mut out = BTreeMap::new();
    for i in 0..corpus.docs.len() {
        let mut near: Vec<(f64, usize)> = (0..corpus.docs.len())
            .filter(|&j| j != i)
            .map(|j| (cos64(vec_of(i), vec_of(j)), j))
            .collect();
        near.sort_by(|a, b| b.0.total_cmp(&a.0).then(corpus.docs[a.1].id.cmp(&corpus.docs[b.1].id)));
        near.truncate(cfg.neighborhood);
        let mut scored: Vec<(f64, usize)> = Vec::new();
        for &(cos, j) in &near {
            let bt = plain_bleu(&titles[j], &titles[i], cfg.bleu.max_order);
            if bt >= cfg.surface_threshold {
                continue;
            }
            let ba = plain_bleu(&titles[j], &articles[i], cfg.bleu.max_order);
            let s = cfg.lambda_e * cos + cfg.lambda_s * bt + (1.0 - cfg.lambda_s) * ba;
            if s > 0.0 {
                scored.push((s, j));
            }
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(corpus.docs[a.1].id.cmp(&corpus.docs[b.1].id)));
        let mut texts = vec![titles[i].clone()];
        let mut picked = Vec::new();
        for (s, j) in scored {
            if picked.len() == cfg.nr_decoys {
                break;
            }
            if texts.contains(&titles[j]) {
                continue;
            }
            texts.push(titles[j].clone());
            picked.push((s, j));
        }
        if picked.len() == cfg.nr_decoys {
            out.insert(
                corpus.docs[i].id.clone(),
                (
                    picked.iter().map(|&(_, j)| corpus.docs[j].id.clone()).collect(),
                    picked.iter().map(|&(s, _)| s).collect(),
                ),
            );
        }
    }
    out
}

/// Synthetic corpus of `docs` documents and a paragraph-vector model on it.
pub fn synthetic(docs: usize, seed: u64) -> (Corpus, PvModel) {
    let corpus = generate(&SynthConfig {
        docs,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let pv = train_pv(
        &corpus,
        &PvConfig {
            initial_lr: 0.25,
            seed,
            ..PvConfig::default()
        },
    )
    .unwrap();
    (corpus, pv)
}

/// Pearson chi-square statistic against a uniform distribution.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}
