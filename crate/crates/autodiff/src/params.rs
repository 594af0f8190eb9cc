use std::collections::HashMap;

use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named dense parameter matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    shapes: Vec<[usize; 2]>,
    values: Vec<Vec<T>>,
    index: HashMap<String, ParamId>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            names: Vec::new(),
            shapes: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, rows: usize, cols: usize, data: Vec<T>) -> Result<ParamId> {
        if data.len() != rows * cols {
            return Err(Error::Invalid(format!(
                "parameter `{name}`: {} values for shape [{rows}, {cols}]",
                data.len()
            )));
        }
        if self.index.contains_key(name) {
            return Err(Error::Invalid(format!("duplicate parameter `{name}`")));
        }
        let id = ParamId(self.values.len());
        self.names.push(name.to_string());
        self.shapes.push([rows, cols]);
        self.values.push(data);
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> Result<ParamId> {
        self.add(name, rows, cols, vec![T::zero(); rows * cols])
    }

    pub fn get(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn shape(&self, id: ParamId) -> [usize; 2] {
        self.shapes[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[T] {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.values[id.0]
    }

    /// Total number of scalars. Shared storage counts once.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn zero_grads(&self) -> Grads<T> {
        Grads {
            values: self.values.iter().map(|v| vec![T::zero(); v.len()]).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().flatten().all(|x| x.is_finite())
    }

    /// Converts element type, e.g. to `f64` for gradient checks.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            shapes: self.shapes.clone(),
            values: self.values.iter().map(|v| v.iter().map(|&x| U::of(x.f64())).collect()).collect(),
            index: self.index.clone(),
        }
    }
}

/// One dense gradient per parameter, aligned with [`ParamStore`] ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    pub values: Vec<Vec<T>>,
}

impl<T: Real> Grads<T> {
    pub fn get(&self, id: ParamId) -> &[T] {
        &self.values[id.0]
    }

    pub fn global_norm(&self) -> T {
        self.values.iter().flatten().map(|&g| g * g).sum::<T>().sqrt()
    }

    pub fn scale(&mut self, c: T) {
        self.values.iter_mut().flatten().for_each(|g| *g *= c);
    }

    pub fn add_assign(&mut self, other: &Grads<T>) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().flatten().all(|x| x.is_finite())
    }
}
