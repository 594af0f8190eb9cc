use crate::params::{Grads, ParamStore};
use crate::{Error, Real, Result};

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut Grads<T>, max_norm: T) -> Result<T> {
    if max_norm.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::Invalid("max_norm must be positive".into()));
    }
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    Ok(norm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdagradConfig {
    pub learning_rate: f64,
    pub epsilon: f64,
    pub initial_accumulator: f64,
}

impl Default for AdagradConfig {
    fn default() -> Self {
        AdagradConfig {
            learning_rate: 0.01,
            epsilon: 1e-8,
            initial_accumulator: 0.0,
        }
    }
}

/// Per-parameter sums of squared gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct AdagradState<T> {
    pub config: AdagradConfig,
    pub accumulators: Vec<Vec<T>>,
}

impl<T: Real> AdagradState<T> {
    pub fn new(store: &ParamStore<T>, config: AdagradConfig) -> Self {
        let init = T::of(config.initial_accumulator);
        AdagradState {
            config,
            accumulators: store.ids().map(|id| vec![init; store.value(id).len()]).collect(),
        }
    }

    /// `acc += g²; p -= lr · g / (sqrt(acc) + ε)`.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Grads<T>) -> Result<()> {
        if grads.values.len() != self.accumulators.len() || grads.values.len() != store.len() {
            return Err(Error::Invalid("gradients do not match the parameter store".into()));
        }
        let lr = T::of(self.config.learning_rate);
        let eps = T::of(self.config.epsilon);
        for (id, (acc, g)) in store.ids().zip(self.accumulators.iter_mut().zip(&grads.values)) {
            let p = store.value_mut(id);
            if p.len() != g.len() {
                return Err(Error::Invalid(format!("gradient length mismatch for parameter {}", id.0)));
            }
            for ((p, a), &g) in p.iter_mut().zip(acc.iter_mut()).zip(g) {
                if g == T::zero() {
                    continue;
                }
                *a += g * g;
                *p = *p - lr * g / (a.sqrt() + eps);
            }
        }
        Ok(())
    }
}
