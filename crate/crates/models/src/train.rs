use std::path::Path;

use mcgen_autodiff::{clip_global_norm, AdagradConfig, AdagradState, Grads, Tape};
use mcgen_core::mccreate::{pair_order, PairOrder};
use mcgen_core::seed::Seeds;
use mcgen_core::textmetrics::rouge_l;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ModelKind, TrainConfig};
use crate::data::{EncodedInstance, InstanceBatch, PairBatch};
use crate::model::Model;
use crate::nets;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    /// Mean training loss since the previous row.
    pub train_loss: f64,
    pub dev_acc: Option<f64>,
    pub rouge_l: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the evaluation with the highest dev accuracy.
    pub best: Model,
    pub best_step: usize,
    pub best_dev_accuracy: Option<f64>,
    pub final_step: usize,
    pub log: Vec<MetricsRow>,
    /// Loss of every step, in order.
    pub step_losses: Vec<f64>,
}

/// Either pairs or whole instances, depending on the model kind.
enum Batch {
    Pairs(PairBatch),
    Instances(InstanceBatch),
}

impl Batch {
    fn len(&self) -> usize {
        match self {
            Batch::Pairs(b) => b.len(),
            Batch::Instances(b) => b.len(),
        }
    }

    fn slice(&self, start: usize, len: usize) -> Batch {
        match self {
            Batch::Pairs(b) => Batch::Pairs(b.slice(start, len)),
            Batch::Instances(b) => Batch::Instances(b.slice(start, len)),
        }
    }
}

/// Endless stream of training examples, re-permuted every epoch when
/// shuffling is on.
struct Stream<'a> {
    data: &'a [EncodedInstance],
    kind: ModelKind,
    order: PairOrder,
    seed: u64,
    epoch: u64,
    pos: usize,
    items: Vec<(usize, usize)>,
}

impl<'a> Stream<'a> {
    fn new(data: &'a [EncodedInstance], kind: ModelKind, shuffle: bool, seed: u64) -> Self {
        let order = if shuffle { PairOrder::Shuffled } else { PairOrder::Grouped };
        let mut s = Stream {
            data,
            kind,
            order,
            seed,
            epoch: 0,
            pos: 0,
            items: Vec::new(),
        };
        s.refill();
        s
    }

    fn refill(&mut self) {
        let seed = Seeds::new(self.seed).stream(&format!("epoch-{}", self.epoch));
        self.items = match self.kind {
            ModelKind::Ffnn5 => {
                let mut v: Vec<(usize, usize)> = (0..self.data.len()).map(|i| (i, 0)).collect();
                if self.order == PairOrder::Shuffled {
                    v.shuffle(&mut Seeds::new(seed).rng("shuffle-instances"));
                }
                v
            }
            _ => {
                let counts: Vec<usize> = self.data.iter().map(|i| i.options.len()).collect();
                pair_order(&counts, self.order, seed)
            }
        };
        self.epoch += 1;
        self.pos = 0;
    }

    fn next_batch(&mut self, size: usize) -> Batch {
        let mut picked = Vec::with_capacity(size);
        while picked.len() < size {
            if self.pos == self.items.len() {
                self.refill();
            }
            picked.push(self.items[self.pos]);
            self.pos += 1;
        }
        match self.kind {
            ModelKind::Ffnn5 => Batch::Instances(InstanceBatch::from_instances(picked.iter().map(|&(i, _)| &self.data[i]))),
            _ => Batch::Pairs(PairBatch::from_pairs(self.data, &picked)),
        }
    }
}

/// Loss value and gradients of a pair batch, split over `shards` tapes.
pub fn pair_gradients(model: &Model, batch: &PairBatch, shards: usize) -> Result<(f64, Grads<f32>)> {
    if shards == 0 || shards > batch.len() {
        return Err(Error::Invalid(format!("{shards} shards for {} pairs", batch.len())));
    }
    sharded_grads(model, &Batch::Pairs(batch.clone()), shards)
}

fn batch_grads(model: &Model, batch: &Batch) -> Result<(f64, Grads<f32>)> {
    let lay = model.layout();
    let mut t = Tape::new(&model.params);
    let loss = match (model.config.kind, batch) {
        (ModelKind::Ffnn, Batch::Pairs(b)) => nets::ffnn_loss(&mut t, lay, b)?,
        (ModelKind::Hybrid, Batch::Pairs(b)) => nets::loss_hybrid(&mut t, lay, b)?,
        (ModelKind::Ffnn5, Batch::Instances(b)) => nets::ffnn5_loss(&mut t, lay, b)?,
        _ => return Err(Error::Invalid("batch type does not match model kind".into())),
    };
    let value = t.scalar(loss) as f64;
    Ok((value, t.backward(loss)?))
}

/// Splits the batch into `shards` contiguous parts, differentiates each on its
/// own tape and sums size-weighted gradients in shard order.
fn sharded_grads(model: &Model, batch: &Batch, shards: usize) -> Result<(f64, Grads<f32>)> {
    if shards == 1 {
        return batch_grads(model, batch);
    }
    let n = batch.len();
    let bounds: Vec<(usize, usize)> = (0..shards)
        .map(|s| (s * n / shards, (s + 1) * n / shards))
        .filter(|(a, b)| b > a)
        .collect();
    let parts: Vec<Result<(f64, Grads<f32>, f64)>> = bounds
        .par_iter()
        .map(|&(a, b)| {
            let (l, g) = batch_grads(model, &batch.slice(a, b - a))?;
            Ok((l, g, (b - a) as f64 / n as f64))
        })
        .collect();
    let mut total = model.params.zero_grads();
    let mut loss = 0.0;
    for p in parts {
        let (l, mut g, w) = p?;
        g.scale(w as f32);
        total.add_assign(&g);
        loss += l * w;
    }
    Ok((loss, total))
}

fn non_finite_report(model: &Model, grads: &Grads<f32>) -> String {
    let bad: Vec<&str> = model
        .params
        .ids()
        .filter(|&id| grads.get(id).iter().any(|g| !g.is_finite()) || model.params.value(id).iter().any(|x| !x.is_finite()))
        .map(|id| model.params.name(id))
        .collect();
    format!("non-finite values in {bad:?}")
}

pub fn accuracy(model: &Model, data: &[EncodedInstance]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Invalid("accuracy over zero instances".into()));
    }
    let preds = model.predict(data)?;
    let correct = preds.iter().zip(data).filter(|(p, i)| p.chosen_index == i.gold).count();
    Ok(correct as f64 / data.len() as f64)
}

/// Mean ROUGE-L between greedy answers and gold titles.
pub fn mean_rouge_l(model: &Model, data: &[EncodedInstance]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Invalid("ROUGE-L over zero instances".into()));
    }
    let scores: Vec<Result<f64>> = data
        .par_iter()
        .map(|inst| {
            let gen = model.generate(&inst.article, model.config.max_title_len)?;
            Ok(rouge_l(&gen, &inst.options[inst.gold]))
        })
        .collect();
    let mut sum = 0.0;
    for s in scores {
        sum += s?;
    }
    Ok(sum / data.len() as f64)
}

/// Mini-batch ADAGRAD with global-norm clipping. Dev accuracy is computed
/// every `eval_every` steps and at the end; the returned model is the one
/// with the best dev accuracy (earliest on ties, final when `dev` is empty).
pub fn train(model: Model, train: &[EncodedInstance], dev: &[EncodedInstance], tc: &TrainConfig) -> Result<TrainOutcome> {
    tc.validate()?;
    if train.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }
    let mut model = model;
    let mut opt = AdagradState::new(
        &model.params,
        AdagradConfig {
            learning_rate: tc.learning_rate,
            epsilon: tc.epsilon,
            initial_accumulator: 0.0,
        },
    );
    let mut stream = Stream::new(train, model.config.kind, tc.shuffle_pairs, tc.seed);
    let dev_eval = &dev[..tc.dev_limit.map_or(dev.len(), |n| n.min(dev.len()))];
    let rouge_eval = &dev[..tc.rouge_samples.min(dev.len())];
    let mut log = Vec::new();
    let mut step_losses = Vec::with_capacity(tc.steps);
    let mut best: Option<(f64, usize, Model)> = None;
    let mut since = Vec::new();
    let mut step = 0;
    while step < tc.steps {
        step += 1;
        let batch = stream.next_batch(tc.batch_size);
        let (loss, mut grads) = sharded_grads(&model, &batch, tc.shards)?;
        if !loss.is_finite() || !grads.all_finite() {
            return Err(Error::NonFinite {
                step,
                detail: format!("loss {loss}; {}", non_finite_report(&model, &grads)),
            });
        }
        clip_global_norm(&mut grads, tc.clip_norm as f32)?;
        opt.step(&mut model.params, &grads)?;
        step_losses.push(loss);
        since.push(loss);

        if step % tc.eval_every == 0 || step == tc.steps {
            let dev_acc = if dev_eval.is_empty() { None } else { Some(accuracy(&model, dev_eval)?) };
            let rouge = if model.config.kind == ModelKind::Hybrid && !rouge_eval.is_empty() {
                Some(mean_rouge_l(&model, rouge_eval)?)
            } else {
                None
            };
            log.push(MetricsRow {
                step,
                train_loss: since.iter().sum::<f64>() / since.len() as f64,
                dev_acc,
                rouge_l: rouge,
            });
            since.clear();
            if let Some(acc) = dev_acc {
                if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                    best = Some((acc, step, model.clone()));
                }
                if tc.target_dev_accuracy.is_some_and(|target| acc >= target) {
                    break;
                }
            }
        }
    }
    let final_step = step;
    let (best_dev_accuracy, best_step, best) = match best {
        Some((a, s, m)) => (Some(a), s, m),
        None => (None, final_step, model),
    };
    Ok(TrainOutcome {
        best,
        best_step,
        best_dev_accuracy,
        final_step,
        log,
        step_losses,
    })
}

/// Index of the row with the highest dev accuracy, earliest on ties.
pub fn best_row(log: &[MetricsRow]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in log.iter().enumerate() {
        if let Some(a) = r.dev_acc {
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((i, a));
            }
        }
    }
    best.map(|(i, _)| i)
}

pub fn write_metrics_csv(path: impl AsRef<Path>, log: &[MetricsRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    for r in log {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Format(e.to_string())))
        .collect()
}
