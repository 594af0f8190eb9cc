//! Accuracy protocol, the Random / BLEU / paragraph-vector baselines, and
//! balanced-accuracy posterior error bars.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;
use crate::error::{Error, Result};
use crate::mccreate::McInstance;
use crate::pvdbow::{cosine, PvModel};
use crate::seed::{item_rng, Seeds};
use crate::textmetrics::{BleuConfig, BleuReference};

/// Minimum Monte Carlo draws accepted by [`balanced_acc_errorbar`].
pub const MIN_ERRORBAR_SAMPLES: usize = 1000;
pub const DEFAULT_ERRORBAR_SAMPLES: usize = 4000;
pub const PRIOR_TAG: &str = "uniform Beta(1,1)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    pub chosen_index: usize,
    pub option_scores: Vec<f64>,
}

impl Prediction {
    pub fn from_scores(instance_id: impl Into<String>, option_scores: Vec<f64>) -> Self {
        Prediction {
            instance_id: instance_id.into(),
            chosen_index: argmax(&option_scores),
            option_scores,
        }
    }
}

/// Index of the maximum; ties go to the lowest index and NaN never wins.
/// Returns 0 for an empty slice.
pub fn argmax<T: PartialOrd + Copy>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] || (xs[best].partial_cmp(&xs[best]).is_none() && x.partial_cmp(&x).is_some()) {
            best = i;
        }
    }
    best
}

pub fn baseline_random(instances: &[McInstance], seed: u64) -> Vec<Prediction> {
    let stream = Seeds::new(seed).stream("random-baseline");
    instances
        .iter()
        .map(|inst| {
            let mut rng = item_rng(stream, &inst.id);
            let k = rng.random_range(0..inst.options.len().max(1));
            let scores = (0..inst.options.len()).map(|j| (j == k) as u8 as f64).collect();
            Prediction::from_scores(inst.id.clone(), scores)
        })
        .collect()
}

/// Scores each option by BLEU(option, article).
pub fn baseline_bleu(instances: &[McInstance], cfg: &BleuConfig) -> Vec<Prediction> {
    instances
        .par_iter()
        .map(|inst| {
            let article = BleuReference::new(&inst.article_tokens(), cfg.max_order);
            let scores = inst.option_tokens().iter().map(|o| article.bleu(o, cfg)).collect();
            Prediction::from_scores(inst.id.clone(), scores)
        })
        .collect()
}

/// Scores each option by the cosine between inferred article and option vectors.
pub fn baseline_pv(instances: &[McInstance], pv: &PvModel, infer_steps: usize) -> Result<Vec<Prediction>> {
    instances
        .par_iter()
        .map(|inst| {
            let a = pv.infer_vector(&inst.article_tokens(), infer_steps).vector;
            let scores = inst
                .option_tokens()
                .iter()
                .map(|o| cosine(&a, &pv.infer_vector(o, infer_steps).vector))
                .collect::<Result<Vec<f64>>>()?;
            Ok(Prediction::from_scores(inst.id.clone(), scores))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "Easy",
            Difficulty::Medium => "Medium",
            Difficulty::Hard => "Hard",
        })
    }
}

impl FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            _ => Err(Error::InvalidArgument(format!("unknown difficulty `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRow {
    pub n: usize,
    /// Fraction of all judged instances carrying this label.
    pub share: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub errorbar: f64,
    pub prior: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_difficulty: Option<BTreeMap<Difficulty, DifficultyRow>>,
}

/// Per gold-position (correct, total) tallies.
pub fn position_counts(preds: &[(usize, usize)], num_options: usize) -> (Vec<u64>, Vec<u64>) {
    let mut correct = vec![0u64; num_options];
    let mut total = vec![0u64; num_options];
    for &(chosen, gold) in preds {
        if gold >= num_options {
            continue;
        }
        total[gold] += 1;
        correct[gold] += (chosen == gold) as u64;
    }
    (correct, total)
}

/// Scores predictions against gold labels. Every instance needs exactly one
/// prediction; extra predictions are an error too.
pub fn accuracy(method: &str, preds: &[Prediction], instances: &[McInstance], seed: u64) -> Result<EvalReport> {
    if instances.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let by_id: HashMap<&str, &Prediction> = preds.iter().map(|p| (p.instance_id.as_str(), p)).collect();
    if by_id.len() != preds.len() {
        return Err(Error::InvalidArgument("duplicate prediction ids".into()));
    }
    let mut pairs = Vec::with_capacity(instances.len());
    for inst in instances {
        let p = by_id
            .get(inst.id.as_str())
            .ok_or_else(|| Error::InvalidArgument(format!("missing prediction for `{}`", inst.id)))?;
        pairs.push((p.chosen_index, inst.gold_index));
    }
    if preds.len() != instances.len() {
        return Err(Error::InvalidArgument("predictions for unknown instances".into()));
    }
    report_from_pairs(method, &pairs, seed)
}

/// Builds a report from (chosen, gold) pairs.
pub fn report_from_pairs(method: &str, pairs: &[(usize, usize)], seed: u64) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let correct = pairs.iter().filter(|(c, g)| c == g).count();
    let k = pairs.iter().map(|&(_, g)| g + 1).max().unwrap_or(1);
    let (pc, pt) = position_counts(pairs, k);
    let (pc, pt): (Vec<u64>, Vec<u64>) = pc.into_iter().zip(pt).filter(|&(_, t)| t > 0).unzip();
    let errorbar = balanced_acc_errorbar(&pc, &pt, DEFAULT_ERRORBAR_SAMPLES, seed)?;
    Ok(EvalReport {
        method: method.to_string(),
        n: pairs.len(),
        correct,
        accuracy: correct as f64 / pairs.len() as f64,
        errorbar,
        prior: PRIOR_TAG.to_string(),
        per_difficulty: None,
    })
}

/// Per-difficulty rows for judged answers given as (correct?, difficulty).
pub fn difficulty_table(judged: &[(bool, Difficulty)]) -> Result<BTreeMap<Difficulty, DifficultyRow>> {
    if judged.is_empty() {
        return Err(Error::Empty("no judged answers".into()));
    }
    let mut rows = BTreeMap::new();
    for d in Difficulty::ALL {
        let of: Vec<bool> = judged.iter().filter(|j| j.1 == d).map(|j| j.0).collect();
        let n = of.len();
        let acc = if n == 0 { 0.0 } else { of.iter().filter(|&&c| c).count() as f64 / n as f64 };
        rows.insert(
            d,
            DifficultyRow {
                n,
                share: n as f64 / judged.len() as f64,
                accuracy: acc,
            },
        );
    }
    Ok(rows)
}

/// Posterior standard deviation of the balanced accuracy, where class k has
/// a Beta(1 + correct_k, 1 + wrong_k) posterior, estimated from `samples`
/// Monte Carlo draws.
pub fn balanced_acc_errorbar(correct: &[u64], total: &[u64], samples: usize, seed: u64) -> Result<f64> {
    if samples < MIN_ERRORBAR_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_ERRORBAR_SAMPLES} samples required, got {samples}"
        )));
    }
    if correct.is_empty() || correct.len() != total.len() {
        return Err(Error::InvalidArgument("per-class counts must be non-empty and aligned".into()));
    }
    let mut posteriors = Vec::with_capacity(total.len());
    for (&c, &t) in correct.iter().zip(total) {
        if t == 0 || c > t {
            return Err(Error::InvalidArgument(format!("invalid class counts {c}/{t}")));
        }
        posteriors.push(
            Beta::new(1.0 + c as f64, 1.0 + (t - c) as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?,
        );
    }
    let mut rng = Seeds::new(seed).rng("errorbar");
    let k = posteriors.len() as f64;
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for i in 0..samples {
        let x: f64 = posteriors.iter().map(|b| b.sample(&mut rng)).sum::<f64>() / k;
        let d = x - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (x - mean);
    }
    Ok((m2 / (samples - 1) as f64).sqrt())
}

/// Aligned-column text table with one row per report.
pub fn render_table(reports: &[EvalReport]) -> String {
    let w = reports.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<w$}  {:>7}  {:>8}  {:>7}\n", "Method", "N", "Accuracy", "+/-");
    for r in reports {
        out.push_str(&format!(
            "{:<w$}  {:>7}  {:>8.1}  {:>7.1}\n",
            r.method,
            r.n,
            100.0 * r.accuracy,
            100.0 * r.errorbar
        ));
    }
    out
}

/// Table with Easy / Medium / Hard / Overall rows (share and accuracy, in %).
pub fn render_difficulty_table(rows: &BTreeMap<Difficulty, DifficultyRow>) -> String {
    let mut out = format!("{:<10}  {:>6}  {:>8}\n", "Difficulty", "Share", "Accuracy");
    let (mut n, mut c) = (0usize, 0.0f64);
    for (d, row) in rows {
        out.push_str(&format!("{:<10}  {:>6.1}  {:>8.1}\n", d.to_string(), 100.0 * row.share, 100.0 * row.accuracy));
        n += row.n;
        c += row.accuracy * row.n as f64;
    }
    let overall = if n == 0 { 0.0 } else { c / n as f64 };
    out.push_str(&format!("{:<10}  {:>6.1}  {:>8.1}\n", "Overall", 100.0, 100.0 * overall));
    out
}

/// Helper used by several baselines: token lists of an instance.
pub fn instance_tokens(inst: &McInstance) -> (Vec<String>, Vec<Vec<String>>) {
    (tokenize(&inst.article), inst.option_tokens())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mccreate::{Split, Variant};

    fn inst(id: &str, article: &str, options: &[&str], gold: usize) -> McInstance {
        McInstance {
            id: id.into(),
            article: article.into(),
            options: options.iter().map(|s| s.to_string()).collect(),
            gold_index: gold,
            decoy_scores: vec![],
            decoy_ids: vec![],
            split: Split::Dev,
            variant: Variant::Pv,
        }
    }

    #[test]
    fn argmax_rules() {
        assert_eq!(argmax(&[0.1, 0.7, 0.3, 0.2, 0.6]), 1);
        assert_eq!(argmax(&[0.0; 5]), 0);
        assert_eq!(argmax(&[f64::NAN, 1.0]), 1);
        assert_eq!(argmax::<f64>(&[]), 0);
    }

    #[test]
    fn argmax_matches_scan() {
        let mut rng = Seeds::new(5).rng("t");
        for _ in 0..1000 {
            let v: Vec<f64> = (0..5).map(|_| (rng.random_range(0..4) as f64) / 3.0).collect();
            let m = v.iter().cloned().fold(f64::MIN, f64::max);
            assert_eq!(argmax(&v), v.iter().position(|&x| x == m).unwrap());
        }
    }

    #[test]
    fn random_baseline_degenerate_and_deterministic() {
        let one = vec![inst("a", "x", &["y"], 0)];
        assert_eq!(baseline_random(&one, 3)[0].chosen_index, 0);
        let many: Vec<_> = (0..20).map(|i| inst(&format!("i{i}"), "x", &["a", "b", "c", "d", "e"], 0)).collect();
        assert_eq!(baseline_random(&many, 9), baseline_random(&many, 9));
    }

    #[test]
    fn bleu_baseline_prefers_article_prefix() {
        let i = inst(
            "a",
            "officials said the harbour bridge reopened on monday after repairs",
            &["storm hits coast", "officials said the harbour bridge", "markets fall", "team wins cup", "rain expected"],
            1,
        );
        assert_eq!(baseline_bleu(&[i], &BleuConfig::default())[0].chosen_index, 1);
        let z = inst("b", "p q r", &["a", "b", "c", "d", "e"], 3);
        assert_eq!(baseline_bleu(&[z], &BleuConfig::default())[0].chosen_index, 0);
    }

    #[test]
    fn accuracy_counts() {
        let insts: Vec<_> = (0..5).map(|i| inst(&format!("i{i}"), "x", &["a", "b", "c", "d", "e"], i)).collect();
        let preds: Vec<_> = (0..5)
            .map(|i| Prediction {
                instance_id: format!("i{i}"),
                chosen_index: 0,
                option_scores: vec![],
            })
            .collect();
        let r = accuracy("t", &preds, &insts, 1).unwrap();
        assert!((r.accuracy - 0.2).abs() < 1e-12);
        assert!(accuracy("t", &preds[..4], &insts, 1).is_err());
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<EvalReport>(&json).unwrap(), r);
    }

    #[test]
    fn errorbar_preconditions() {
        assert!(balanced_acc_errorbar(&[0], &[0], 1000, 1).is_err());
        assert!(balanced_acc_errorbar(&[1], &[2], 999, 1).is_err());
        assert!(balanced_acc_errorbar(&[3], &[2], 1000, 1).is_err());
    }

    #[test]
    fn difficulty_rows() {
        let rows = difficulty_table(&[(true, Difficulty::Easy), (true, Difficulty::Easy), (false, Difficulty::Hard)]).unwrap();
        assert_eq!(rows[&Difficulty::Easy].accuracy, 1.0);
        assert_eq!(rows[&Difficulty::Hard].accuracy, 0.0);
        assert_eq!(rows[&Difficulty::Medium].n, 0);
        let total: f64 = rows.values().map(|r| r.share).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(render_difficulty_table(&rows).contains("66.7"));
    }
}
