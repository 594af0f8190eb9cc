//! Parameter layout and forward passes, generic over the scalar type so the
//! same graphs run in `f32` for training and `f64` for gradient checks.
//!
//! Parameter groups:
//!
//! * Ω: `emb` (plus `emb.tgt` when the hybrid model is untied)
//! * θ: `enc.*`, `dec.*`, `att.*`, `out.*`
//! * w: `gen.proj`, `gen.b`
//! * u: `mlp.*` (FFNN, FFNN5) or `head.*` (hybrid)

use mcgen_autodiff::{ParamId, ParamStore, Real, Tape, Var};
use mcgen_core::corpus::{BOS, EOS, PAD};
use rand::Rng;

use crate::config::{Attention, ModelConfig, ModelKind, Pooling};
use crate::data::{InstanceBatch, PairBatch};
use crate::{Error, Result};

const MASKED: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zero,
    /// Uniform in ±scale.
    Uniform(f64),
    /// Uniform in ±sqrt(6 / (rows + cols)).
    Glorot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

fn spec(out: &mut Vec<ParamSpec>, name: impl Into<String>, rows: usize, cols: usize, init: Init) {
    out.push(ParamSpec {
        name: name.into(),
        rows,
        cols,
        init,
    });
}

fn dense_specs(out: &mut Vec<ParamSpec>, prefix: &str, input: usize, hidden: &[usize], classes: usize) {
    let mut fan_in = input;
    for (i, &h) in hidden.iter().chain(std::iter::once(&classes)).enumerate() {
        spec(out, format!("{prefix}.{i}.w"), fan_in, h, Init::Glorot);
        spec(out, format!("{prefix}.{i}.b"), 1, h, Init::Zero);
        fan_in = h;
    }
}

fn gru_specs(out: &mut Vec<ParamSpec>, prefix: &str, cfg: &ModelConfig) {
    let h = cfg.gru_hidden;
    for l in 0..cfg.gru_layers {
        let input = if l == 0 { cfg.embed_dim } else { h };
        for g in ["wz", "wr", "wh"] {
            spec(out, format!("{prefix}.{l}.{g}"), input + h, h, Init::Glorot);
        }
        for g in ["bz", "br", "bh"] {
            spec(out, format!("{prefix}.{l}.{g}"), 1, h, Init::Zero);
        }
    }
}

/// Every parameter the configured model owns. Shared storage appears once.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let (v, e, h) = (cfg.vocab_size, cfg.embed_dim, cfg.gru_hidden);
    let mut out = Vec::new();
    spec(&mut out, "emb", v, e, Init::Uniform(cfg.init_scale));
    match cfg.kind {
        ModelKind::Ffnn => dense_specs(&mut out, "mlp", 2 * e, &cfg.ffnn_hidden, 2),
        ModelKind::Ffnn5 => dense_specs(&mut out, "mlp", 6 * e, &cfg.ffnn_hidden, 5),
        ModelKind::Hybrid => {
            if !cfg.tied_embeddings {
                spec(&mut out, "emb.tgt", v, e, Init::Uniform(cfg.init_scale));
            }
            gru_specs(&mut out, "enc", cfg);
            gru_specs(&mut out, "dec", cfg);
            match cfg.attention {
                Attention::Bilinear => spec(&mut out, "att.w", h, h, Init::Glorot),
                Attention::Tanh => {
                    spec(&mut out, "att.w1", h, h, Init::Glorot);
                    spec(&mut out, "att.w2", h, h, Init::Glorot);
                    spec(&mut out, "att.v", h, 1, Init::Glorot);
                }
            }
            spec(&mut out, "out.w", 2 * h, e, Init::Glorot);
            spec(&mut out, "out.b", 1, e, Init::Zero);
            spec(&mut out, "gen.proj", e, e, Init::Glorot);
            spec(&mut out, "gen.b", 1, v, Init::Zero);
            dense_specs(&mut out, "head", h + e, &cfg.head_hidden, 2);
        }
    }
    out
}

pub fn param_count(cfg: &ModelConfig) -> usize {
    param_specs(cfg).iter().map(|s| s.rows * s.cols).sum()
}

/// Names of the generation-only output projection w.
pub const GENERATION_PARAMS: [&str; 2] = ["gen.proj", "gen.b"];

pub fn init_params<T: Real>(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<ParamStore<T>> {
    let mut store = ParamStore::new();
    for s in param_specs(cfg) {
        let n = s.rows * s.cols;
        let bound = match s.init {
            Init::Zero => 0.0,
            Init::Uniform(a) => a,
            Init::Glorot => (6.0 / (s.rows + s.cols) as f64).sqrt(),
        };
        let data = if bound == 0.0 {
            vec![T::zero(); n]
        } else {
            (0..n).map(|_| T::of(rng.random_range(-bound..bound))).collect()
        };
        store.add(&s.name, s.rows, s.cols, data)?;
    }
    Ok(store)
}

#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct GruIds {
    pub wz: ParamId,
    pub wr: ParamId,
    pub wh: ParamId,
    pub bz: ParamId,
    pub br: ParamId,
    pub bh: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub enum AttIds {
    Bilinear { w: ParamId },
    Tanh { w1: ParamId, w2: ParamId, v: ParamId },
}

#[derive(Debug, Clone)]
pub struct Seq2seqIds {
    pub emb_tgt: ParamId,
    pub enc: Vec<GruIds>,
    pub dec: Vec<GruIds>,
    pub att: AttIds,
    pub out: Dense,
    pub gen_proj: ParamId,
    pub gen_b: ParamId,
}

/// Parameter ids resolved by name for one configuration.
#[derive(Debug, Clone)]
pub struct Layout {
    pub cfg: ModelConfig,
    pub emb: ParamId,
    /// `mlp.*` or `head.*`, last layer producing logits.
    pub dense: Vec<Dense>,
    pub seq2seq: Option<Seq2seqIds>,
}

impl Layout {
    pub fn resolve<T: Real>(store: &ParamStore<T>, cfg: &ModelConfig) -> Result<Self> {
        let expected = param_specs(cfg);
        if store.len() != expected.len() {
            return Err(Error::Invalid(format!(
                "parameter store has {} tensors, config expects {}",
                store.len(),
                expected.len()
            )));
        }
        for s in &expected {
            let id = get(store, &s.name)?;
            if store.shape(id) != [s.rows, s.cols] {
                return Err(Error::Invalid(format!(
                    "parameter `{}` has shape {:?}, expected [{}, {}]",
                    s.name,
                    store.shape(id),
                    s.rows,
                    s.cols
                )));
            }
        }
        let emb = get(store, "emb")?;
        let dense_prefix = if cfg.kind == ModelKind::Hybrid { "head" } else { "mlp" };
        let n_dense = if cfg.kind == ModelKind::Hybrid {
            cfg.head_hidden.len() + 1
        } else {
            cfg.ffnn_hidden.len() + 1
        };
        let dense = (0..n_dense)
            .map(|i| {
                Ok(Dense {
                    w: get(store, &format!("{dense_prefix}.{i}.w"))?,
                    b: get(store, &format!("{dense_prefix}.{i}.b"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let seq2seq = if cfg.kind == ModelKind::Hybrid {
            let gru = |prefix: &str| {
                (0..cfg.gru_layers)
                    .map(|l| {
                        let g = |n: &str| get(store, &format!("{prefix}.{l}.{n}"));
                        Ok(GruIds {
                            wz: g("wz")?,
                            wr: g("wr")?,
                            wh: g("wh")?,
                            bz: g("bz")?,
                            br: g("br")?,
                            bh: g("bh")?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            };
            let att = match cfg.attention {
                Attention::Bilinear => AttIds::Bilinear { w: get(store, "att.w")? },
                Attention::Tanh => AttIds::Tanh {
                    w1: get(store, "att.w1")?,
                    w2: get(store, "att.w2")?,
                    v: get(store, "att.v")?,
                },
            };
            Some(Seq2seqIds {
                emb_tgt: if cfg.tied_embeddings { emb } else { get(store, "emb.tgt")? },
                enc: gru("enc")?,
                dec: gru("dec")?,
                att,
                out: Dense {
                    w: get(store, "out.w")?,
                    b: get(store, "out.b")?,
                },
                gen_proj: get(store, "gen.proj")?,
                gen_b: get(store, "gen.b")?,
            })
        } else {
            None
        };
        Ok(Layout {
            cfg: cfg.clone(),
            emb,
            dense,
            seq2seq,
        })
    }

    fn s2s(&self) -> Result<&Seq2seqIds> {
        self.seq2seq
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("{} model has no Seq2seq part", self.cfg.kind)))
    }
}

fn get<T: Real>(store: &ParamStore<T>, name: &str) -> Result<ParamId> {
    store
        .get(name)
        .ok_or_else(|| Error::Invalid(format!("missing parameter `{name}`")))
}

fn ids(seq: &[u32]) -> Vec<usize> {
    seq.iter().map(|&x| x as usize).collect()
}

/// Length without trailing padding.
pub fn unpadded_len(seq: &[u32]) -> usize {
    seq.iter().rposition(|&x| x != PAD).map_or(0, |p| p + 1)
}

/// Dense stack with ReLU between layers and raw logits at the end.
pub fn mlp<T: Real>(t: &mut Tape<'_, T>, layers: &[Dense], x: Var) -> Result<Var> {
    let mut x = x;
    for (i, d) in layers.iter().enumerate() {
        let (w, b) = (t.param(d.w), t.param(d.b));
        let y = t.matmul(x, w)?;
        x = t.add_bias(y, b)?;
        if i + 1 < layers.len() {
            x = t.relu(x);
        }
    }
    Ok(x)
}

/// Mean of the token embeddings of each sequence, stacked to [B, E].
pub fn pooled_embedding<T: Real>(t: &mut Tape<'_, T>, emb: ParamId, seqs: &[Vec<u32>]) -> Result<Var> {
    let rows = seqs
        .iter()
        .map(|s| {
            if unpadded_len(s) == 0 {
                return Err(Error::Invalid("empty token sequence".into()));
            }
            let e = t.gather(emb, &ids(&s[..unpadded_len(s)]))?;
            Ok(t.mean_rows(e))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(t.concat_rows(&rows)?)
}

/// Mean cross-entropy of `logits` [B, C] against `targets`.
pub fn cross_entropy<T: Real>(t: &mut Tape<'_, T>, logits: Var, targets: &[usize]) -> Result<Var> {
    let lp = t.log_softmax(logits);
    let picked = t.pick(lp, targets)?;
    let s = t.sum(picked);
    Ok(t.scale(s, T::of(-1.0 / targets.len() as f64)))
}

pub fn ffnn_logits<T: Real>(t: &mut Tape<'_, T>, lay: &Layout, batch: &PairBatch) -> Result<Var> {
    let a = pooled_embedding(t, lay.emb, &batch.articles)?;
    let ti = pooled_embedding(t, lay.emb, &batch.titles)?;
    let x = t.concat_cols(&[a, ti])?;
    mlp(t, &lay.dense, x)
}

/// Per-pair [no, yes] probabilities.
pub fn ffnn_forward<T: Real>(t: &mut Tape<'_, T>, lay: &Layout, batch: &PairBatch) -> Result<Var> {
    let l = ffnn_logits(t, lay, batch)?;
    Ok(t.softmax(l))
}

pub fn ffnn_loss<T: Real>(t: &mut Tape<'_, T>, lay: &Layout, batch: &PairBatch) -> Result<Var> {
    let l = ffnn_logits(t, lay, batch)?;
    let y: Vec<usize> = batch.labels.iter().map(|&x| x as usize).collect();
    cross_entropy(t, l, &y)
}

pub fn ffnn5_logits<T: Real>(t: &mut Tape<'_, T>, lay: &Layout, batch: &InstanceBatch) -> Result<Var> {
    if let Some(o) = batch.options.iter().find(|o| o.len() != 5) {
        return Err(Error::Invalid(format!("5-class model needs exactly 5 options, got {}", o.len())));
    }
    let mut parts = vec![pooled_embedding(t, lay.emb, &batch.articles)?];
    for k in 0..5 {
        let titles: Vec<Vec<u32>> = batch.options.iter().map(|o| o[k].clone()).collect();
        parts.push(pooled_embedding(t, lay.emb, &titles)?);
    }
    let x = t.concat_cols(&parts)?;
    mlp(t, &lay.dense, x)
}

pub fn ffnn5_forward<T: Real>(t: &mut Tape<'_, T>, lay: &Layout, batch: &InstanceBatch) -> Result<Var> {
    let l = ffnn5_logits(t, lay, batch)?;
    Ok(t.softmax(l))
}

pub fn ffnn5_loss<T: Real>(t: &mut Tape<'_, T>, lay: &Layout, batch: &InstanceBatch) -> Result<Var> {
    let l = ffnn5_logits(t, lay, batch)?;
    cross_entropy(t, l, &batch.gold)
}

/// z = σ(W_z[x,h]+b_z), r = σ(W_r[x,h]+b_r), h̃ = tanh(W_h[x, r∘h]+b_h),
/// h' = z∘h + (1−z)∘h̃.
pub fn gru_cell<T: Real>(t: &mut Tape<'_, T>, g: &GruIds, x: Var, h: Var) -> Result<Var> {
    let xh = t.concat_cols(&[x, h])?;
    let (wz, wr, wh) = (t.param(g.wz), t.param(g.wr), t.param(g.wh));
    let (bz, br, bh) = (t.param(g.bz), t.param(g.br), t.param(g.bh));
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
    let zc = t.mul(z, c)?;
    let c_minus_zc = t.sub(c, zc)?;
    Ok(t.add(zh, c_minus_zc)?)
}

/// Keeps `prev` in rows whose mask is 0.
fn hold<T: Real>(t: &mut Tape<'_, T>, prev: Var, next: Var, mask: &[T]) -> Result<Var> {
    if mask.iter().all(|&m| m == T::one()) {
        return Ok(next);
    }
    let m = t.constant(mask.len(), 1, mask.to_vec())?;
    let d = t.sub(next, prev)?;
    let d = t.mul_col(d, m)?;
    Ok(t.add(prev, d)?)
}

fn step_mask<T: Real>(lens: &[usize], pos: usize) -> Vec<T> {
    lens.iter().map(|&n| if pos < n { T::one() } else { T::zero() }).collect()
}

/// Weighted sum over positions, each row weighted by its own column entry.
fn weighted_positions<T: Real>(t: &mut Tape<'_, T>, xs: &[Var], weights: &[Vec<T>]) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for (&x, w) in xs.iter().zip(weights) {
        if w.iter().all(|&v| v == T::zero()) {
            continue;
        }
        let c = t.constant(w.len(), 1, w.clone())?;
        let y = t.mul_col(x, c)?;
        acc = Some(match acc {
            Some(a) => t.add(a, y)?,
            None => y,
        });
    }
    acc.ok_or_else(|| Error::Invalid("pooling over zero positions".into()))
}

fn pool_weights<T: Real>(lens: &[usize], steps: usize, pooling: Pooling) -> Vec<Vec<T>> {
    (0..steps)
        .map(|p| {
            lens.iter()
                .map(|&n| match pooling {
                    Pooling::Mean if p < n => T::of(1.0 / n as f64),
                    Pooling::Final if p + 1 == n => T::one(),
                    _ => T::zero(),
                })
                .collect()
        })
        .collect()
}

/// Encoder outputs O^e with the per-row lengths they were computed under.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub outputs: Vec<Var>,
    pub lengths: Vec<usize>,
    /// Final hidden state of each layer.
    pub finals: Vec<Var>,
    /// W₂h_i per position for tanh attention.
    keys: Vec<Var>,
    /// [B, T] additive attention mask.
    att_bias: Vec<f64>,
}

pub fn encode<T: Real>(t: &mut Tape<'_, T>, lay: &Layout, articles: &[Vec<u32>]) -> Result<Encoded> {
    let s2s = lay.s2s()?;
    let b = articles.len();
    let lens: Vec<usize> = articles.iter().map(|a| unpadded_len(a)).collect();
    if lens.contains(&0) {
        return Err(Error::Invalid("empty article".into()));
    }
    let steps = lens.iter().copied().max().unwrap_or(0);
    let mut h: Vec<Var> = (0..s2s.enc.len()).map(|_| t.zeros(b, lay.cfg.gru_hidden)).collect();
    let mut outputs = Vec::with_capacity(steps);
    for p in 0..steps {
        let tok: Vec<usize> = articles.iter().map(|a| a.get(p).copied().unwrap_or(PAD) as usize).collect();
        let mask = step_mask::<T>(&lens, p);
        let mut x = t.gather(lay.emb, &tok)?;
        for (l, g) in s2s.enc.iter().enumerate() {
            let next = gru_cell(t, g, x, h[l])?;
            h[l] = hold(t, h[l], next, &mask)?;
            x = h[l];
        }
        outputs.push(x);
    }
    let keys = match s2s.att {
        AttIds::Tanh { w2, .. } => {
            let w2 = t.param(w2);
            outputs.iter().map(|&o| t.matmul(o, w2)).collect::<std::result::Result<Vec<_>, _>>()?
        }
        AttIds::Bilinear { .. } => Vec::new(),
    };
    let mut att_bias = vec![0.0; b * steps];
    for (r, &n) in lens.iter().enumerate() {
        for p in n..steps {
            att_bias[r * steps + p] = MASKED;
        }
    }
    Ok(Encoded {
        outputs,
        lengths: lens,
        finals: h,
        keys,
        att_bias,
    })
}

/// Returns (context [B, H], α [B, T]). Padded source positions get weight 0.
pub fn attend<T: Real>(t: &mut Tape<'_, T>, att: &AttIds, s: Var, enc: &Encoded) -> Result<(Var, Var)> {
    if enc.outputs.is_empty() || enc.lengths.contains(&0) {
        return Err(Error::Invalid("attention over fully padded source".into()));
    }
    let scores = match *att {
        AttIds::Bilinear { w } => {
            let w = t.param(w);
            let sw = t.matmul(s, w)?;
            enc.outputs
                .iter()
                .map(|&h| {
                    let m = t.mul(sw, h)?;
                    Ok(t.sum_cols(m))
                })
                .collect::<Result<Vec<_>>>()?
        }
        AttIds::Tanh { w1, v, .. } => {
            let (w1, v) = (t.param(w1), t.param(v));
            let q = t.matmul(s, w1)?;
            enc.keys
                .iter()
                .map(|&k| {
                    let a = t.add(q, k)?;
                    let a = t.tanh(a);
                    Ok(t.matmul(a, v)?)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let scores = t.concat_cols(&scores)?;
    let bias: Vec<T> = enc.att_bias.iter().map(|&x| T::of(x)).collect();
    let scores = t.add_const(scores, &bias)?;
    let alpha = t.softmax(scores);
    let mut ctx: Option<Var> = None;
    for (p, &h) in enc.outputs.iter().enumerate() {
        let a = t.slice_cols(alpha, p, 1)?;
        let y = t.mul_col(h, a)?;
        ctx = Some(match ctx {
            Some(c) => t.add(c, y)?,
            None => y,
        });
    }
    Ok((ctx.expect("non-empty outputs"), alpha))
}

/// One decoder step: updates `state` in place, returns (O^d [B, E], α).
pub fn decode_step<T: Real>(
    t: &mut Tape<'_, T>,
    lay: &Layout,
    enc: &Encoded,
    state: &mut [Var],
    tokens: &[usize],
    mask: &[T],
) -> Result<(Var, Var)> {
    let s2s = lay.s2s()?;
    let mut x = t.gather(s2s.emb_tgt, tokens)?;
    for (l, g) in s2s.dec.iter().enumerate() {
        let next = gru_cell(t, g, x, state[l])?;
        state[l] = hold(t, state[l], next, mask)?;
        x = state[l];
    }
    let (ctx, alpha) = attend(t, &s2s.att, x, enc)?;
    let sc = t.concat_cols(&[x, ctx])?;
    let (w, b) = (t.param(s2s.out.w), t.param(s2s.out.b));
    let o = t.matmul(sc, w)?;
    let o = t.add_bias(o, b)?;
    Ok((t.tanh(o), alpha))
}

/// Vocabulary logits [rows, V] from decoder outputs.
pub fn vocab_logits<T: Real>(t: &mut Tape<'_, T>, lay: &Layout, od: Var) -> Result<Var> {
    let s2s = lay.s2s()?;
    let (proj, emb, b) = (t.param(s2s.gen_proj), t.param(s2s.emb_tgt), t.param(s2s.gen_b));
    let p = t.matmul(od, proj)?;
    let l = t.matmul_nt(p, emb)?;
    Ok(t.add_bias(l, b)?)
}

#[derive(Debug, Clone)]
pub struct Seq2seqOutputs {
    pub encoder: Vec<Var>,
    pub decoder: Vec<Var>,
    pub alphas: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct HybridOutput {
    /// [B, 2] logits of the FFNN head (no, yes).
    pub logits: Var,
    pub cls_loss: Var,
    /// Summed gold-pair token NLL divided by the batch size.
    pub gen_loss: Option<Var>,
    pub loss: Var,
    /// Per decoder step, log-probabilities [gold rows, V].
    pub vocab_log_probs: Vec<Var>,
    pub seq2seq: Seq2seqOutputs,
}

/// Teacher-forced hybrid pass. The generation term is built when λ_gen > 0
/// or `want_vocab` is set; otherwise w stays off the tape.
pub fn hybrid_forward<T: Real>(
    t: &mut Tape<'_, T>,
    lay: &Layout,
    batch: &PairBatch,
    want_vocab: bool,
) -> Result<HybridOutput> {
    let cfg = &lay.cfg;
    let b = batch.len();
    if b == 0 {
        return Err(Error::Invalid("empty batch".into()));
    }
    let enc = encode(t, lay, &batch.articles)?;
    let tlens: Vec<usize> = batch.titles.iter().map(|x| unpadded_len(x) + 1).collect();
    let steps = tlens.iter().copied().max().unwrap_or(1);
    let mut state = enc.finals.clone();
    let mut decoder = Vec::with_capacity(steps);
    let mut alphas = Vec::with_capacity(steps);
    for p in 0..steps {
        let tok: Vec<usize> = batch
            .titles
            .iter()
            .map(|ti| match p {
                0 => BOS as usize,
                _ => ti.get(p - 1).copied().unwrap_or(PAD) as usize,
            })
            .collect();
        let mask = step_mask::<T>(&tlens, p);
        let (od, a) = decode_step(t, lay, &enc, &mut state, &tok, &mask)?;
        decoder.push(od);
        alphas.push(a);
    }

    let ew = pool_weights::<T>(&enc.lengths, enc.outputs.len(), cfg.pooling);
    let dw = pool_weights::<T>(&tlens, steps, cfg.pooling);
    let ep = weighted_positions(t, &enc.outputs, &ew)?;
    let dp = weighted_positions(t, &decoder, &dw)?;
    let feats = t.concat_cols(&[ep, dp])?;
    let logits = mlp(t, &lay.dense, feats)?;
    let y: Vec<usize> = batch.labels.iter().map(|&x| x as usize).collect();
    let cls_loss = cross_entropy(t, logits, &y)?;

    let gold: Vec<usize> = (0..b).filter(|&r| batch.labels[r] == 1).collect();
    let mut vocab_log_probs = Vec::new();
    let mut gen_loss = None;
    if (cfg.lambda_gen > 0.0 || want_vocab) && !gold.is_empty() {
        let mut total: Option<Var> = None;
        for (p, &od) in decoder.iter().enumerate() {
            let live: Vec<usize> = gold.iter().copied().filter(|&r| p < tlens[r]).collect();
            if live.is_empty() {
                continue;
            }
            let rows = if live.len() == b {
                od
            } else {
                let parts = live
                    .iter()
                    .map(|&r| t.slice_rows(od, r, 1))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                t.concat_rows(&parts)?
            };
            let l = vocab_logits(t, lay, rows)?;
            let lp = t.log_softmax(l);
            let target: Vec<usize> = live
                .iter()
                .map(|&r| batch.titles[r].get(p).copied().unwrap_or(EOS) as usize)
                .collect();
            let picked = t.pick(lp, &target)?;
            let s = t.sum(picked);
            total = Some(match total {
                Some(a) => t.add(a, s)?,
                None => s,
            });
            vocab_log_probs.push(lp);
        }
        gen_loss = total.map(|s| t.scale(s, T::of(-1.0 / b as f64)));
    }
    let loss = match gen_loss {
        Some(g) if cfg.lambda_gen > 0.0 => {
            let g = t.scale(g, T::of(cfg.lambda_gen));
            t.add(cls_loss, g)?
        }
        _ => cls_loss,
    };
    Ok(HybridOutput {
        logits,
        cls_loss,
        gen_loss,
        loss,
        vocab_log_probs,
        seq2seq: Seq2seqOutputs {
            encoder: enc.outputs,
            decoder,
            alphas,
        },
    })
}

pub fn loss_hybrid<T: Real>(t: &mut Tape<'_, T>, lay: &Layout, batch: &PairBatch) -> Result<Var> {
    Ok(hybrid_forward(t, lay, batch, false)?.loss)
}

/// Greedy decoding from `<s>` until `</s>` or `max_len` tokens. Padding and
/// `<s>` are never emitted.
pub fn generate<T: Real>(t: &mut Tape<'_, T>, lay: &Layout, article: &[u32], max_len: usize) -> Result<Vec<u32>> {
    if max_len == 0 {
        return Ok(Vec::new());
    }
    let enc = encode(t, lay, &[article.to_vec()])?;
    let mut state = enc.finals.clone();
    let mut prev = BOS as usize;
    let mut out = Vec::new();
    while out.len() < max_len {
        let (od, _) = decode_step(t, lay, &enc, &mut state, &[prev], &[T::one()])?;
        let l = vocab_logits(t, lay, od)?;
        let v = t.value(l);
        let mut best = None;
        for (i, &x) in v.iter().enumerate() {
            if i == PAD as usize || i == BOS as usize {
                continue;
            }
            if best.is_none_or(|(_, bx)| x > bx) {
                best = Some((i, x));
            }
        }
        let (tok, _) = best.ok_or_else(|| Error::Invalid("vocabulary has no emittable tokens".into()))?;
        if tok == EOS as usize {
            break;
        }
        out.push(tok as u32);
        prev = tok;
    }
    Ok(out)
}
