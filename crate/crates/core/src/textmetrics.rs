//! Surface similarity: sentence BLEU with the brevity penalty pinned to 1,
//! and ROUGE-L F-measure.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_order: usize,
    pub brevity_penalty_fixed_to_one: bool,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            max_order: 4,
            brevity_penalty_fixed_to_one: true,
        }
    }
}

impl BleuConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=9).contains(&self.max_order) {
            return Err(Error::InvalidArgument(format!(
                "BLEU max_order must be in 1..=9, got {}",
                self.max_order
            )));
        }
        Ok(())
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped n-gram precision of `candidate` against `reference` as a
/// (matches, total) pair.
pub fn clipped_precision<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let total = candidate.len().saturating_sub(n - 1);
    let matched = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, total)
}

/// Sentence BLEU without smoothing. The effective order is capped at the
/// candidate length; any zero precision yields 0.
pub fn bleu<T: Eq + Hash>(candidate: &[T], reference: &[T], cfg: &BleuConfig) -> f64 {
    let order = cfg.max_order.min(candidate.len());
    let counts: Vec<(usize, usize)> = (1..=order)
        .map(|n| clipped_precision(candidate, reference, n))
        .collect();
    bleu_from_counts(&counts, candidate.len(), reference.len(), cfg)
}

/// Combines per-order (matches, total) counts into a BLEU score.
pub fn bleu_from_counts(counts: &[(usize, usize)], cand_len: usize, ref_len: usize, cfg: &BleuConfig) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for &(m, t) in counts {
        if m == 0 {
            return 0.0;
        }
        log_sum += (m as f64 / t as f64).ln();
    }
    let geo = (log_sum / counts.len() as f64).exp();
    let bp = if cfg.brevity_penalty_fixed_to_one || cand_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    (bp * geo).min(1.0)
}

/// A reference with its n-gram counts precomputed, for scoring many
/// candidates against one long reference.
#[derive(Debug, Clone)]
pub struct BleuReference<T> {
    len: usize,
    counts: Vec<HashMap<Vec<T>, usize>>,
}

impl<T: Eq + Hash + Clone> BleuReference<T> {
    pub fn new(reference: &[T], max_order: usize) -> Self {
        let counts = (1..=max_order)
            .map(|n| {
                let mut m: HashMap<Vec<T>, usize> = HashMap::new();
                if reference.len() >= n {
                    for w in reference.windows(n) {
                        *m.entry(w.to_vec()).or_insert(0) += 1;
                    }
                }
                m
            })
            .collect();
        BleuReference {
            len: reference.len(),
            counts,
        }
    }

    /// Same value as [`bleu`] against the original reference.
    pub fn bleu(&self, candidate: &[T], cfg: &BleuConfig) -> f64 {
        let order = cfg.max_order.min(candidate.len()).min(self.counts.len());
        let counts: Vec<(usize, usize)> = (1..=order)
            .map(|n| {
                let grams: Vec<&[T]> = candidate.windows(n).collect();
                let mut matched = 0;
                for (i, g) in grams.iter().enumerate() {
                    if grams[..i].contains(g) {
                        continue;
                    }
                    let c = grams[i..].iter().filter(|h| *h == g).count();
                    matched += c.min(self.counts[n - 1].get(*g).copied().unwrap_or(0));
                }
                (matched, grams.len())
            })
            .collect();
        bleu_from_counts(&counts, candidate.len(), self.len, cfg)
    }
}

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure with β = 1.
pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(candidate, reference) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / candidate.len() as f64;
    let r = lcs / reference.len() as f64;
    2.0 * p * r / (p + r)
}

pub const ROUGE_L_BETA: f64 = 1.0;

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn bleu_examples() {
        let cfg = BleuConfig::default();
        let six = toks("a b c d e f");
        assert_eq!(bleu(&six, &six, &cfg), 1.0);
        assert_eq!(bleu(&toks("a b"), &toks("a b"), &cfg), 1.0);
        assert_eq!(bleu(&toks("a b c d"), &toks("a b c e"), &cfg), 0.0);
        assert_eq!(clipped_precision(&toks("a b c d"), &toks("a b c e"), 2), (2, 3));
        assert_eq!(bleu::<&str>(&[], &six, &cfg), 0.0);
    }

    #[test]
    fn bleu_clips_repeated_ngrams() {
        let cfg = BleuConfig {
            max_order: 1,
            ..Default::default()
        };
        // "the the the" against "the cat": clipped count 1 of 3.
        let s = bleu(&toks("the the the"), &toks("the cat"), &cfg);
        assert!((s - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_config_bounds() {
        assert!(BleuConfig { max_order: 0, ..Default::default() }.validate().is_err());
        assert!(BleuConfig { max_order: 10, ..Default::default() }.validate().is_err());
        assert!(BleuConfig::default().validate().is_ok());
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l(&toks("a b c"), &toks("a b c")), 1.0);
        assert_eq!(rouge_l(&toks("a b"), &toks("c d")), 0.0);
        assert!((rouge_l(&toks("a b c d"), &toks("a c b d")) - 0.75).abs() < 1e-12);
        assert_eq!(rouge_l::<&str>(&[], &toks("a")), 0.0);
    }

    proptest! {
        #[test]
        fn prepared_reference_matches_direct(c in proptest::collection::vec(0u8..4, 0..10), r in proptest::collection::vec(0u8..4, 0..30)) {
            let cfg = BleuConfig::default();
            let prepared = BleuReference::new(&r, cfg.max_order);
            prop_assert_eq!(prepared.bleu(&c, &cfg).to_bits(), bleu(&c, &r, &cfg).to_bits());
        }

        #[test]
        fn bleu_in_unit_interval(c in proptest::collection::vec(0u8..4, 0..10), r in proptest::collection::vec(0u8..4, 0..10)) {
            let b = bleu(&c, &r, &BleuConfig::default());
            prop_assert!((0.0..=1.0).contains(&b));
            if !c.is_empty() {
                prop_assert_eq!(bleu(&c, &c, &BleuConfig::default()), 1.0);
            }
        }

        #[test]
        fn bleu_order_invariant_for_short_identical(x in proptest::collection::vec(0u8..5, 1..4), k in 4usize..10) {
            let a = bleu(&x, &x, &BleuConfig { max_order: k, ..Default::default() });
            let b = bleu(&x, &x, &BleuConfig { max_order: 9, ..Default::default() });
            prop_assert_eq!(a, b);
        }

        #[test]
        fn rouge_symmetric_for_equal_lengths(a in proptest::collection::vec(0u8..4, 1..8), seed in any::<u64>()) {
            let mut b = a.clone();
            let n = b.len();
            b.rotate_left((seed as usize) % n);
            prop_assert!((rouge_l(&a, &b) - rouge_l(&b, &a)).abs() < 1e-12);
            prop_assert_eq!(rouge_l(&a, &a), 1.0);
        }
    }
}
