//! Finite-difference checks of the model losses, returning the worst error
//! so both the gradient tests and the acceptance suite can apply tolerances.

use mcgen_autodiff::{check_gradients, ParamStore, Tape};
use mcgen_models::nets::{self, GruIds, Layout};
use mcgen_models::{ModelConfig, ModelKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{random_store, toy_instances, toy_pairs};

pub const H: f64 = 1e-5;
pub const SEEDS: [u64; 5] = [11, 12, 13, 14, 15];

/// Worst relative error of the pairwise loss (FFNN or hybrid) over all seeds.
pub fn pair_loss_error(cfg: &ModelConfig) -> f64 {
    let mut worst = 0.0f64;
    for seed in SEEDS {
        let store = random_store(cfg, seed);
        let lay = Layout::resolve(&store, cfg).unwrap();
        let batch = toy_pairs(cfg.vocab_size, seed);
        let r = check_gradients(&store, H, 1, |t| match cfg.kind {
            ModelKind::Ffnn => Ok(nets::ffnn_loss(t, &lay, &batch).unwrap()),
            _ => Ok(nets::loss_hybrid(t, &lay, &batch).unwrap()),
        })
        .unwrap();
        assert_eq!(r.checked, store.num_scalars());
        worst = worst.max(r.max_rel_error);
    }
    worst
}

pub fn ffnn5_loss_error(cfg: &ModelConfig) -> f64 {
    let mut worst = 0.0f64;
    for seed in SEEDS {
        let store = random_store(cfg, seed);
        let lay = Layout::resolve(&store, cfg).unwrap();
        let batch = toy_instances(cfg.vocab_size, seed, 3);
        let r = check_gradients(&store, H, 1, |t| Ok(nets::ffnn5_loss(t, &lay, &batch).unwrap())).unwrap();
        worst = worst.max(r.max_rel_error);
    }
    worst
}

/// Worst absolute error of one GRU cell projected to a scalar.
pub fn gru_cell_error() -> f64 {
    let mut worst = 0.0f64;
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let (b, x, h) = (3, 4, 5);
        let mut s = ParamStore::<f64>::new();
        let xi = s.add("x", b, x, r(b * x)).unwrap();
        let hi = s.add("h", b, h, r(b * h)).unwrap();
        let w = |s: &mut ParamStore<f64>, n: &str, v: Vec<f64>, rows| s.add(n, rows, h, v).unwrap();
        let g = GruIds {
            wz: w(&mut s, "wz", r((x + h) * h), x + h),
            wr: w(&mut s, "wr", r((x + h) * h), x + h),
            wh: w(&mut s, "wh", r((x + h) * h), x + h),
            bz: w(&mut s, "bz", r(h), 1),
            br: w(&mut s, "br", r(h), 1),
            bh: w(&mut s, "bh", r(h), 1),
        };
        let proj = r(b * h);
        let res = check_gradients(&s, H, 1, |t: &mut Tape<'_, f64>| {
            let (xv, hv) = (t.param(xi), t.param(hi));
            let out = nets::gru_cell(t, &g, xv, hv).unwrap();
            let p = t.mul_const(out, &proj)?;
            Ok(t.sum(p))
        })
        .unwrap();
        worst = worst.max(res.max_abs_error);
    }
    worst
}
