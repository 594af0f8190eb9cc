mod support;

use std::collections::HashMap;

use mcgen_core::corpus::{Corpus, Document};
use mcgen_core::evalharness::{accuracy, baseline_random};
use mcgen_core::mccreate::{
    build_dataset, build_rnd_dataset, combine, export_pairs, validate_dataset, McCreateConfig, McInstance, PairOrder,
    Split, Variant,
};
use mcgen_core::pvdbow::{train_pv, PvConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{decoy_oracle, chi_square_uniform, synthetic};

#[test]
fn build_matches_straight_line_oracle_on_30_docs() {
    let (corpus, pv) = synthetic(30, 4);
    let cfg = McCreateConfig::default();
    let ds = build_dataset(&corpus, &pv, &cfg).unwrap();
    let oracle = decoy_oracle(&corpus, &pv, &cfg);
    assert!(!oracle.is_empty());
    let got: Vec<&str> = ds.instances.iter().map(|i| i.id.as_str()).collect();
    let want: Vec<&str> = oracle.keys().map(String::as_str).collect();
    assert_eq!(got, want);
    let titles: HashMap<&str, &str> = corpus.docs.iter().map(|d| (d.id.as_str(), d.title.as_str())).collect();
    for inst in &ds.instances {
        let (ids, scores) = &oracle[&inst.id];
        assert_eq!(&inst.decoy_ids, ids, "{}", inst.id);
        for (a, b) in inst.decoy_scores.iter().zip(scores) {
            assert!((a - b).abs() < 1e-6, "{}: {a} vs {b}", inst.id);
        }
        assert_eq!(inst.options[inst.gold_index], titles[inst.id.as_str()]);
        let mut opts = inst.options.clone();
        let mut expect: Vec<String> = ids.iter().map(|d| titles[d.as_str()].to_string()).collect();
        expect.push(titles[inst.id.as_str()].to_string());
        opts.sort();
        expect.sort();
        assert_eq!(opts, expect);
    }
}

#[test]
fn duplicate_title_is_never_a_decoy() {
    let (mut corpus, _) = synthetic(200, 6);
    let copy = Document {
        id: "zz-copy".into(),
        ..corpus.docs[0].clone()
    };
    corpus.docs.push(copy);
    let corpus = Corpus::new(corpus.docs, "dup").unwrap();
    let pv = train_pv(
        &corpus,
        &PvConfig {
            initial_lr: 0.25,
            ..PvConfig::default()
        },
    )
    .unwrap();
    let ds = build_dataset(&corpus, &pv, &McCreateConfig::default()).unwrap();
    for inst in &ds.instances {
        if inst.id == corpus.docs[0].id {
            assert!(!inst.decoy_ids.contains(&"zz-copy".to_string()));
        }
        let gold = inst.gold();
        assert_eq!(inst.options.iter().filter(|o| *o == gold).count(), 1);
    }
    assert!(validate_dataset(&ds, &corpus, &pv).passed());
}

fn uniform_instances(n: usize, seed: u64) -> Vec<McInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| McInstance {
            id: format!("q{i:05}"),
            article: "x".into(),
            options: (0..5).map(|k| format!("o{k}")).collect(),
            gold_index: rng.random_range(0..5),
            decoy_scores: vec![],
            decoy_ids: vec![],
            split: Split::Dev,
            variant: Variant::Pv,
        })
        .collect()
}

#[test]
fn random_baseline_is_twenty_percent() {
    let insts = uniform_instances(5000, 8);
    let r = accuracy("Random", &baseline_random(&insts, 1), &insts, 1).unwrap();
    assert!((r.accuracy - 0.2).abs() <= 0.02, "{}", r.accuracy);
}

#[test]
fn random_decoys_differ_from_base_and_combined_gold_is_uniform() {
    let (corpus, pv) = synthetic(5000, 2);
    let base = build_dataset(&corpus, &pv, &McCreateConfig::default()).unwrap();
    assert!(base.instances.len() >= 5000 * 9 / 10, "{}", base.instances.len());
    let rnd = build_rnd_dataset(&corpus, &base, 3).unwrap();
    assert_eq!(rnd, build_rnd_dataset(&corpus, &base, 3).unwrap());
    let differ = base
        .instances
        .iter()
        .zip(&rnd.instances)
        .filter(|(b, r)| {
            let mut x = b.decoy_ids.clone();
            let mut y = r.decoy_ids.clone();
            x.sort();
            y.sort();
            x != y
        })
        .count();
    assert!(differ as f64 >= 0.95 * base.instances.len() as f64, "{differ}");
    for r in &rnd.instances {
        let gold = r.gold();
        assert!(r.options.iter().enumerate().all(|(k, o)| k == r.gold_index || o != gold));
    }

    let comb = combine(&base, &rnd).unwrap();
    let mut counts = [0u64; 9];
    for (c, (b, r)) in comb.instances.iter().zip(base.instances.iter().zip(&rnd.instances)) {
        assert_eq!(c.options.len(), 9);
        assert_eq!(c.gold(), b.gold());
        let mut got = c.options.clone();
        let mut want: Vec<String> = b.options.iter().chain(r.options.iter().enumerate().filter(|&(k, _)| k != r.gold_index).map(|(_, o)| o)).cloned().collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
        counts[c.gold_index] += 1;
    }
    // 1% critical value of chi-square with 8 degrees of freedom
    assert!(chi_square_uniform(&counts) < 20.09, "{counts:?}");
}

#[test]
fn export_pairs_orders_hold_the_same_multiset() {
    let (corpus, pv) = synthetic(300, 9);
    let ds = build_dataset(&corpus, &pv, &McCreateConfig::default()).unwrap();
    let key = |p: &mcgen_core::mccreate::Pair| (p.instance_id.clone(), p.option_index, p.title.clone(), p.label);
    let mut g: Vec<_> = export_pairs(&ds, PairOrder::Grouped, 1).unwrap().iter().map(key).collect();
    let s1 = export_pairs(&ds, PairOrder::Shuffled, 1).unwrap();
    assert_eq!(s1, export_pairs(&ds, PairOrder::Shuffled, 1).unwrap());
    let mut s: Vec<_> = s1.iter().map(key).collect();
    assert_ne!(g, s);
    g.sort();
    s.sort();
    assert_eq!(g, s);
    assert_eq!(s.iter().filter(|p| p.3 == 1).count(), ds.instances.len());
}

#[test]
fn pv_dataset_passes_validation_and_rebuilds_identically() {
    let (corpus, pv) = synthetic(1500, 5);
    let cfg = McCreateConfig::default();
    let ds = build_dataset(&corpus, &pv, &cfg).unwrap();
    let report = validate_dataset(&ds, &corpus, &pv);
    assert!(report.passed(), "{:?}", &report.failures[..report.failures.len().min(5)]);
    assert_eq!(report.checked, ds.instances.len());
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    ds.write(&a).unwrap();
    build_dataset(&corpus, &pv, &cfg).unwrap().write(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn pair_orders_are_permutations(counts in proptest::collection::vec(1usize..10, 1..40), seed in any::<u64>()) {
        use mcgen_core::mccreate::pair_order;
        let g = pair_order(&counts, PairOrder::Grouped, seed);
        let mut s = pair_order(&counts, PairOrder::Shuffled, seed);
        let mut k = 0;
        for (i, &n) in counts.iter().enumerate() {
            for j in 0..n {
                prop_assert_eq!(g[k], (i, j));
                k += 1;
            }
        }
        s.sort();
        prop_assert_eq!(s, g);
    }
}
