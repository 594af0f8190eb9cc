mod support;

use mcgen_core::corpus::{tokenize, Corpus, Document};
use mcgen_core::pvdbow::{cosine, train_pv, PvConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::synthetic;

fn corpus_of(titles: &[String]) -> Corpus {
    let docs = titles
        .iter()
        .enumerate()
        .map(|(i, t)| Document {
            id: format!("d{i:04}"),
            title: t.clone(),
            article: t.clone(),
        })
        .collect();
    Corpus::new(docs, "test").unwrap()
}

fn cfg(dim: usize) -> PvConfig {
    PvConfig {
        dim,
        min_count: 1,
        initial_lr: 0.25,
        ..PvConfig::default()
    }
}

#[test]
fn loss_falls_from_first_to_last_epoch() {
    let (corpus, _) = synthetic(200, 12);
    let pv = train_pv(&corpus, &PvConfig { epochs: 5, ..cfg(32) }).unwrap();
    assert_eq!(pv.epoch_losses.len(), 5);
    assert!(pv.epoch_losses[4] < pv.epoch_losses[0], "{:?}", pv.epoch_losses);
    assert!(pv.doc_vectors().iter().all(|x| x.is_finite()));
}

#[test]
fn identical_titles_are_the_closest_pair() {
    let mut titles: Vec<String> = (0..20)
        .map(|i| format!("w{i}a w{i}b w{i}c w{i}d"))
        .collect();
    titles.push(titles[3].clone());
    let corpus = corpus_of(&titles);
    let pv = train_pv(&corpus, &PvConfig { epochs: 40, ..cfg(16) }).unwrap();
    let n = corpus.len();
    let mut best = (f64::MIN, 0, 0);
    for a in 0..n {
        for b in a + 1..n {
            let c = pv.row_cosine(pv.row_of(&corpus.docs[a].id).unwrap(), pv.row_of(&corpus.docs[b].id).unwrap());
            if c > best.0 {
                best = (c, a, b);
            }
        }
    }
    assert_eq!((best.1, best.2), (3, 20), "max pairwise cosine {best:?}");
}

#[test]
fn inferred_training_title_is_nearest_its_stored_vector() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let titles: Vec<String> = (0..100)
        .map(|_| (0..6).map(|_| format!("w{}", rng.random_range(0..300))).collect::<Vec<_>>().join(" "))
        .collect();
    let corpus = corpus_of(&titles);
    let pv = train_pv(&corpus, &PvConfig { epochs: 20, ..cfg(32) }).unwrap();
    for d in &corpus.docs {
        let v = pv.infer_vector(&tokenize(&d.title), 50).vector;
        let own = pv.row_of(&d.id).unwrap();
        let c_own = cosine(&v, pv.doc_vector(own)).unwrap();
        for r in (0..pv.num_docs()).filter(|&r| r != own) {
            let c = cosine(&v, pv.doc_vector(r)).unwrap();
            assert!(c_own > c, "{}: own {c_own} <= {c} for {}", d.id, pv.doc_ids()[r]);
        }
    }
}

#[test]
fn top_neighbor_matches_brute_force_scan() {
    let (corpus, pv) = synthetic(1000, 14);
    for d in corpus.docs.iter().step_by(20).take(50) {
        let q = pv.row_of(&d.id).unwrap();
        let nl = pv.neighbors(&d.id, 10).unwrap();
        assert_eq!(nl.entries.len(), 10);
        assert!(nl.entries.iter().all(|e| e.doc_id != d.id));
        assert!(nl.entries.windows(2).all(|w| w[0].cosine >= w[1].cosine));
        let mut best: Option<(f64, &str)> = None;
        for (r, id) in pv.doc_ids().iter().enumerate() {
            if r == q {
                continue;
            }
            let c = cosine(pv.doc_vector(q), pv.doc_vector(r)).unwrap();
            if best.is_none_or(|(b, bid)| c > b + 1e-9 || ((c - b).abs() <= 1e-9 && id.as_str() < bid)) {
                best = Some((c, id));
            }
        }
        let (c, id) = best.unwrap();
        assert!(
            nl.entries[0].doc_id == id || (nl.entries[0].cosine - c).abs() < 1e-6,
            "{}: {} vs {id}",
            d.id,
            nl.entries[0].doc_id
        );
    }
}
