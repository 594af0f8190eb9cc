use crate::params::{Grads, ParamStore};
use crate::tape::{Tape, Var};
use crate::Result;

/// Worst disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_abs_error: f64,
    /// `|a − n| / max(|a|, |n|, 1e-8)` maximized over coordinates whose
    /// gradient magnitude exceeds `1e-6`.
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Compares `backward` against central differences with step `h` on every
/// parameter coordinate (or every `stride`-th, for large models).
pub fn check_gradients<F>(store: &ParamStore<f64>, h: f64, stride: usize, loss: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape<'_, f64>) -> Result<Var>,
{
    let analytic: Grads<f64> = {
        let mut t = Tape::new(store);
        let l = loss(&mut t)?;
        t.backward(l)?
    };
    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut t = Tape::new(s);
        let l = loss(&mut t)?;
        Ok(t.scalar(l))
    };
    let mut work = store.clone();
    let mut out = GradCheck {
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        checked: 0,
    };
    let mut k = 0usize;
    for id in store.ids() {
        for i in 0..store.value(id).len() {
            k += 1;
            if !(k - 1).is_multiple_of(stride.max(1)) {
                continue;
            }
            let x = store.value(id)[i];
            work.value_mut(id)[i] = x + h;
            let up = eval(&work)?;
            work.value_mut(id)[i] = x - h;
            let down = eval(&work)?;
            work.value_mut(id)[i] = x;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.get(id)[i];
            let abs = (a - numeric).abs();
            out.max_abs_error = out.max_abs_error.max(abs);
            if a.abs().max(numeric.abs()) > 1e-6 {
                out.max_rel_error = out.max_rel_error.max(abs / a.abs().max(numeric.abs()).max(1e-8));
            }
            out.checked += 1;
        }
    }
    Ok(out)
}
