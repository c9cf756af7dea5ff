use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::Tensor;

/// Standard deviation of the seeded normal initialiser.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
struct Entry<F> {
    name: String,
    value: Arc<Tensor<F>>,
    trainable: bool,
}

/// Named parameter tensors in registration order.
#[derive(Debug, Clone)]
pub struct ParamStore<F> {
    entries: Vec<Entry<F>>,
    index: HashMap<String, ParamId>,
}

impl<F: Real> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<F>, trainable: bool) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::Contract(format!("duplicate parameter name {name}")));
        }
        let id = ParamId(self.entries.len());
        self.index.insert(name.clone(), id);
        self.entries.push(Entry {
            name,
            value: Arc::new(value),
            trainable,
        });
        Ok(id)
    }

    /// Registers a trainable `N(0, 0.02²)` tensor.
    pub fn normal<R: Rng + ?Sized>(&mut self, name: impl Into<String>, shape: &[usize], rng: &mut R) -> Result<ParamId> {
        self.add(name, Tensor::randn(shape, INIT_STD, rng), true)
    }

    pub fn ones(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<ParamId> {
        self.add(name, Tensor::ones(shape), true)
    }

    pub fn zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<ParamId> {
        self.add(name, Tensor::zeros(shape), true)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        Arc::make_mut(&mut self.entries[id.0].value)
    }

    pub fn shared(&self, id: ParamId) -> Arc<Tensor<F>> {
        Arc::clone(&self.entries[id.0].value)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.entries[id.0].trainable = trainable;
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<F>)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| (ParamId(i), e.name.as_str(), &*e.value))
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.value.len()).sum()
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    name: e.name.clone(),
                    value: Arc::new(e.value.cast()),
                    trainable: e.trainable,
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Replaces the value of a parameter, keeping its shape.
    pub fn set(&mut self, id: ParamId, value: Tensor<F>) -> Result<()> {
        if value.shape() != self.get(id).shape() {
            return Err(TensorError::Shape(format!(
                "parameter {} has shape {:?}, got {:?}",
                self.name(id),
                self.get(id).shape(),
                value.shape()
            )));
        }
        self.entries[id.0].value = Arc::new(value);
        Ok(())
    }
}

/// Per-parameter gradient accumulator aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<F> {
    grads: Vec<Option<Vec<F>>>,
}

impl<F: Real> ParamGrads<F> {
    pub fn new(num_params: usize) -> Self {
        Self {
            grads: vec![None; num_params],
        }
    }

    pub fn for_store(store: &ParamStore<F>) -> Self {
        Self::new(store.len())
    }

    pub fn add(&mut self, id: ParamId, g: &[F]) {
        match &mut self.grads[id.0] {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b),
            slot @ None => *slot = Some(g.to_vec()),
        }
    }

    pub fn add_all(&mut self, other: &ParamGrads<F>) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.add(ParamId(i), g);
            }
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&[F]> {
        self.grads[id.0].as_deref()
    }

    pub fn get_mut(&mut self, id: ParamId) -> Option<&mut Vec<F>> {
        self.grads[id.0].as_mut()
    }

    pub fn set(&mut self, id: ParamId, g: Vec<F>) {
        self.grads[id.0] = Some(g);
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn scale(&mut self, c: F) {
        for g in self.grads.iter_mut().flatten() {
            g.iter_mut().for_each(|v| *v *= c);
        }
    }

    pub fn norm(&self) -> F {
        self.grads
            .iter()
            .flatten()
            .flat_map(|g| g.iter())
            .map(|&v| v * v)
            .sum::<F>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().flat_map(|g| g.iter()).all(|v| v.is_finite())
    }

    /// Concatenates the gradients of `ids` (zeros where absent) into one vector.
    pub fn flatten(&self, store: &ParamStore<F>, ids: &[ParamId]) -> Vec<F> {
        let mut out = Vec::new();
        for &id in ids {
            match self.get(id) {
                Some(g) => out.extend_from_slice(g),
                None => out.extend(std::iter::repeat(F::ZERO).take(store.get(id).len())),
            }
        }
        out
    }

    /// Inverse of [`ParamGrads::flatten`].
    pub fn unflatten(&mut self, store: &ParamStore<F>, ids: &[ParamId], flat: &[F]) {
        let mut offset = 0;
        for &id in ids {
            let n = store.get(id).len();
            self.set(id, flat[offset..offset + n].to_vec());
            offset += n;
        }
    }
}
