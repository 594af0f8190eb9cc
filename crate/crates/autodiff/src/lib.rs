//! Dense 2-D reverse-mode automatic differentiation.
//!
//! Parameters live in a [`ParamStore`]. A [`Tape`] borrows the store,
//! records operations as they are evaluated, and [`Tape::backward`] returns
//! a [`Grads`] with one dense gradient per parameter (zeros for parameters
//! the loss never touched). Every tensor is a row-major matrix; scalars are
//! `1 × 1`. Training uses `f32`, gradient checks use `f64`.

mod check;
mod optim;
mod params;
mod tape;

pub use check::{check_gradients, GradCheck};
pub use optim::{clip_global_norm, AdagradConfig, AdagradState};
pub use params::{Grads, ParamId, ParamStore};
pub use tape::{Tape, Var};

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign};

use num_traits::Float;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Floating-point element type.
pub trait Real: Float + Copy + Debug + Default + Sum + AddAssign + MulAssign + Send + Sync + 'static {
    fn of(x: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn f64(self) -> f64 {
        self
    }
}
