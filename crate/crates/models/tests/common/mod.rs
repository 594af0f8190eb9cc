#![allow(dead_code)]

pub mod grad;

use std::sync::OnceLock;

use mcgen_autodiff::ParamStore;
use mcgen_core::mccreate::{build_dataset, McCreateConfig, McInstance};
use mcgen_core::pvdbow::{train_pv, PvConfig};
use mcgen_core::synth::{generate, SynthConfig};
use mcgen_models::data::PairBatch;
use mcgen_models::nets::init_params;
use mcgen_models::{Attention, ModelConfig, ModelKind, Pooling};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Instances from the full synthetic pipeline on a 2000-document corpus.
pub fn synthetic_instances() -> &'static [McInstance] {
    static DATA: OnceLock<Vec<McInstance>> = OnceLock::new();
    DATA.get_or_init(|| {
        let corpus = generate(&SynthConfig {
            docs: 2000,
            ..SynthConfig::default()
        })
        .unwrap();
        let pv = train_pv(
            &corpus,
            &PvConfig {
                initial_lr: 0.25,
                ..PvConfig::default()
            },
        )
        .unwrap();
        build_dataset(&corpus, &pv, &McCreateConfig::default())
            .unwrap()
            .instances
    })
}

pub fn tiny(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        kind,
        vocab_size: 12,
        embed_dim: 4,
        ffnn_hidden: vec![6, 5],
        head_hidden: vec![5, 4],
        gru_layers: 2,
        gru_hidden: 3,
        attention: Attention::Bilinear,
        tied_embeddings: true,
        lambda_gen: 0.5,
        pooling: Pooling::Mean,
        max_article_len: 20,
        max_title_len: 10,
        init_scale: 0.5,
    }
}

/// Parameters drawn wider than the training init so every path matters.
pub fn random_store(cfg: &ModelConfig, seed: u64) -> ParamStore<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s: ParamStore<f64> = init_params(cfg, &mut rng).unwrap();
    let ids: Vec<_> = s.ids().collect();
    for id in ids {
        for x in s.value_mut(id) {
            *x += rng.random_range(-0.3..0.3);
        }
    }
    s
}

fn seq(rng: &mut ChaCha8Rng, vocab: usize, lo: usize, hi: usize) -> Vec<u32> {
    let n = rng.random_range(lo..=hi);
    (0..n).map(|_| rng.random_range(1..vocab as u32)).collect()
}

/// Two instances with five options each, flattened to pairs.
pub fn toy_pairs(vocab: usize, seed: u64) -> PairBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = PairBatch::default();
    for _ in 0..2 {
        let article = seq(&mut rng, vocab, 3, 6);
        let gold = rng.random_range(0..5);
        for k in 0..5 {
            let title = seq(&mut rng, vocab, 1, 4);
            b.push(&article, &title, (k == gold) as u8);
        }
    }
    b
}

pub fn toy_instances(vocab: usize, seed: u64, n: usize) -> mcgen_models::InstanceBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = mcgen_models::InstanceBatch::default();
    for _ in 0..n {
        b.articles.push(seq(&mut rng, vocab, 3, 6));
        b.options.push((0..5).map(|_| seq(&mut rng, vocab, 1, 4)).collect());
        b.gold.push(rng.random_range(0..5));
    }
    b
}
