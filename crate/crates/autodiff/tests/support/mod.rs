//! Per-op gradient cases shared by the gradcheck tests and the acceptance suite.
#![allow(dead_code)]

use mcgen_autodiff::{check_gradients, ParamId, ParamStore, Real, Result, Tape, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Parameters `a` (3×4), `b` (4×3), `c` (3×4), bias (1×4), col (3×1), emb (5×4)
/// plus a random 3×4 weight used to make every output coordinate matter.
pub struct Fixture {
    pub store: ParamStore<f64>,
    pub a: ParamId,
    pub b: ParamId,
    pub c: ParamId,
    pub bias: ParamId,
    pub col: ParamId,
    pub emb: ParamId,
    pub w34: Vec<f64>,
    pub w_any: Vec<f64>,
}

fn fixture(seed: u64, positive: bool) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = if positive { (0.5, 2.0) } else { (-1.5, 1.5) };
    let mut store = ParamStore::new();
    let a = store.add("a", 3, 4, rand_vec(&mut rng, 12, lo, hi)).unwrap();
    let b = store.add("b", 4, 3, rand_vec(&mut rng, 12, lo, hi)).unwrap();
    let c = store.add("c", 3, 4, rand_vec(&mut rng, 12, lo, hi)).unwrap();
    let bias = store.add("bias", 1, 4, rand_vec(&mut rng, 4, lo, hi)).unwrap();
    let col = store.add("col", 3, 1, rand_vec(&mut rng, 3, lo, hi)).unwrap();
    let emb = store.add("emb", 5, 4, rand_vec(&mut rng, 20, lo, hi)).unwrap();
    let w34 = rand_vec(&mut rng, 12, -1.0, 1.0);
    let w_any = rand_vec(&mut rng, 64, -1.0, 1.0);
    Fixture {
        store,
        a,
        b,
        c,
        bias,
        col,
        emb,
        w34,
        w_any,
    }
}

/// Weighted sum of all entries of `v`, so the loss depends on each one.
fn project(t: &mut Tape<'_, f64>, v: Var, w: &[f64]) -> Result<Var> {
    let [m, n] = t.shape(v);
    let y = t.mul_const(v, &w[..m * n])?;
    Ok(t.sum(y))
}

pub type OpFn = fn(&mut Tape<'_, f64>, &Fixture) -> Result<Var>;

pub struct OpCase {
    pub name: &'static str,
    pub positive: bool,
    pub op: OpFn,
}

fn case(name: &'static str, positive: bool, op: OpFn) -> OpCase {
    OpCase { name, positive, op }
}

pub fn op_cases() -> Vec<OpCase> {
    vec![
        case("matmul", false, |t, f| {
            let (a, b) = (t.param(f.a), t.param(f.b));
            t.matmul(a, b)
        }),
        case("matmul_nt", false, |t, f| {
            let (a, c) = (t.param(f.a), t.param(f.c));
            t.matmul_nt(a, c)
        }),
        case("add", false, |t, f| {
            let (a, c) = (t.param(f.a), t.param(f.c));
            t.add(a, c)
        }),
        case("sub", false, |t, f| {
            let (a, c) = (t.param(f.a), t.param(f.c));
            t.sub(a, c)
        }),
        case("mul", false, |t, f| {
            let (a, c) = (t.param(f.a), t.param(f.c));
            t.mul(a, c)
        }),
        case("add_bias", false, |t, f| {
            let (a, b) = (t.param(f.a), t.param(f.bias));
            t.add_bias(a, b)
        }),
        case("scale", false, |t, f| {
            let a = t.param(f.a);
            Ok(t.scale(a, -2.5))
        }),
        case("add_const", false, |t, f| {
            let a = t.param(f.a);
            t.add_const(a, &f.w34)
        }),
        case("add_scalar", false, |t, f| {
            let a = t.param(f.a);
            Ok(t.add_scalar(a, 0.7))
        }),
        case("mul_const", false, |t, f| {
            let a = t.param(f.a);
            t.mul_const(a, &f.w34)
        }),
        case("transpose", false, |t, f| {
            let a = t.param(f.a);
            Ok(t.transpose(a))
        }),
        case("concat_cols", false, |t, f| {
            let (a, col, c) = (t.param(f.a), t.param(f.col), t.param(f.c));
            t.concat_cols(&[a, col, c])
        }),
        case("concat_rows", false, |t, f| {
            let (a, bias, c) = (t.param(f.a), t.param(f.bias), t.param(f.c));
            t.concat_rows(&[a, bias, c])
        }),
        case("slice_cols", false, |t, f| {
            let a = t.param(f.a);
            t.slice_cols(a, 1, 2)
        }),
        case("slice_rows", false, |t, f| {
            let a = t.param(f.a);
            t.slice_rows(a, 1, 2)
        }),
        case("gather", false, |t, f| t.gather(f.emb, &[4, 0, 4, 2])),
        case("sigmoid", false, |t, f| {
            let a = t.param(f.a);
            Ok(t.sigmoid(a))
        }),
        case("tanh", false, |t, f| {
            let a = t.param(f.a);
            Ok(t.tanh(a))
        }),
        case("relu", false, |t, f| {
            let a = t.param(f.a);
            Ok(t.relu(a))
        }),
        case("log", true, |t, f| {
            let a = t.param(f.a);
            Ok(t.log(a))
        }),
        case("softmax", false, |t, f| {
            let a = t.param(f.a);
            Ok(t.softmax(a))
        }),
        case("log_softmax", false, |t, f| {
            let a = t.param(f.a);
            Ok(t.log_softmax(a))
        }),
        case("sum", false, |t, f| {
            let a = t.param(f.a);
            let s = t.sum(a);
            t.mul(s, s)
        }),
        case("mean", false, |t, f| {
            let a = t.param(f.a);
            let s = t.mean(a);
            t.mul(s, s)
        }),
        case("sum_cols", false, |t, f| {
            let a = t.param(f.a);
            Ok(t.sum_cols(a))
        }),
        case("mean_rows", false, |t, f| {
            let a = t.param(f.a);
            Ok(t.mean_rows(a))
        }),
        case("mul_col", false, |t, f| {
            let (a, col) = (t.param(f.a), t.param(f.col));
            t.mul_col(a, col)
        }),
        case("pick", false, |t, f| {
            let a = t.param(f.a);
            let l = t.log_softmax(a);
            t.pick(l, &[3, 0, 2])
        }),
    ]
}

/// Largest absolute finite-difference error of one op over all seeds.
pub fn op_error(c: &OpCase) -> Result<f64> {
    let mut worst = 0.0f64;
    for seed in SEEDS {
        let f = fixture(seed, c.positive);
        let r = check_gradients(&f.store, H, 1, |t| {
            let v = (c.op)(t, &f)?;
            project(t, v, &f.w_any)
        })?;
        worst = worst.max(r.max_abs_error);
    }
    Ok(worst)
}

/// GRU step h' = z∘h + (1−z)∘tanh(W_h[x, r∘h] + b_h), r and z sigmoid gates.
pub fn gru_step<T: Real>(t: &mut Tape<'_, T>, s: &ParamStore<T>) -> Result<Var> {
    let get = |n: &str| s.get(n).unwrap();
    let x = t.param(get("x"));
    let h = t.param(get("h"));
    let xh = t.concat_cols(&[x, h])?;
    let (wz, wr, wh) = (t.param(get("wz")), t.param(get("wr")), t.param(get("wh")));
    let (bz, br, bh) = (t.param(get("bz")), t.param(get("br")), t.param(get("bh")));
    let z = t.matmul(xh, wz)?;
    let z = t.add_bias(z, bz)?;
    let z = t.sigmoid(z);
    let r = t.matmul(xh, wr)?;
    let r = t.add_bias(r, br)?;
    let r = t.sigmoid(r);
    let rh = t.mul(r, h)?;
    let xrh = t.concat_cols(&[x, rh])?;
    let c = t.matmul(xrh, wh)?;
    let c = t.add_bias(c, bh)?;
    let c = t.tanh(c);
    let zh = t.mul(z, h)?;
    let one_minus_z = t.scale(z, T::of(-1.0));
    let one_minus_z = t.add_scalar(one_minus_z, T::one());
    let zc = t.mul(one_minus_z, c)?;
    let h2 = t.add(zh, zc)?;
    let sq = t.mul(h2, h2)?;
    Ok(t.sum(sq))
}

pub fn gru_store(seed: u64) -> ParamStore<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, x, hd) = (2, 3, 4);
    let mut s = ParamStore::new();
    s.add("x", b, x, rand_vec(&mut rng, b * x, -1.0, 1.0)).unwrap();
    s.add("h", b, hd, rand_vec(&mut rng, b * hd, -1.0, 1.0)).unwrap();
    for w in ["wz", "wr", "wh"] {
        s.add(w, x + hd, hd, rand_vec(&mut rng, (x + hd) * hd, -0.8, 0.8))
            .unwrap();
    }
    for bn in ["bz", "br", "bh"] {
        s.add(bn, 1, hd, rand_vec(&mut rng, hd, -0.5, 0.5)).unwrap();
    }
    s
}
