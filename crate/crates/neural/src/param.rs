use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{NeuralError, Result};
use crate::graph::Gradients;
use crate::tensor::Tensor;
use crate::SeedRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named tensor with its gradient accumulator.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    /// Receives decoupled weight decay.
    pub decay: bool,
    /// Frozen parameters never receive gradients.
    pub trainable: bool,
}

/// Owns every parameter of a model, in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Names must be unique and free of whitespace so
    /// they can be written to a checkpoint manifest.
    pub fn add(
        &mut self,
        name: impl Into<String>,
        value: Tensor,
        decay: bool,
        trainable: bool,
    ) -> ParamId {
        let name = name.into();
        assert!(
            !name.is_empty() && !name.chars().any(char::is_whitespace),
            "invalid parameter name {name:?}"
        );
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name:?}"
        );
        let id = ParamId(self.params.len());
        let grad = Tensor::zeros_like(&value);
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter {
            name,
            value,
            grad,
            decay,
            trainable,
        });
        id
    }

    /// Matrix initialized uniformly in ±sqrt(6 / (fan_in + fan_out)).
    pub fn add_glorot(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut SeedRng,
    ) -> ParamId {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        let value = Tensor::matrix(rows, cols, data).expect("shape matches");
        self.add(name, value, true, true)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape), false, true)
    }

    /// Embedding table drawn from N(0, std²). Embeddings are exempt from weight decay.
    pub fn add_normal(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        std: f64,
        rng: &mut SeedRng,
    ) -> ParamId {
        let normal = Normal::new(0.0, std).expect("positive std");
        let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
        let value = Tensor::matrix(rows, cols, data).expect("shape matches");
        self.add(name, value, false, true)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Adds `scale * gradients` into the accumulators of trainable parameters.
    pub fn accumulate(&mut self, grads: &Gradients, scale: f64) {
        for (id, g) in grads.dense() {
            let p = &mut self.params[id.0];
            if !p.trainable {
                continue;
            }
            for (a, b) in p.grad.data_mut().iter_mut().zip(g.data()) {
                *a += scale * b;
            }
        }
        for (id, row, g) in grads.sparse_rows() {
            let p = &mut self.params[id.0];
            if !p.trainable {
                continue;
            }
            for (a, b) in p.grad.row_mut(*row).iter_mut().zip(g) {
                *a += scale * b;
            }
        }
    }

    /// Replaces all values with those of `other`, which must have the same layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) {
        assert_eq!(self.params.len(), other.params.len());
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            a.value = b.value.clone();
        }
    }

    /// Loads named tensors, checking names and shapes against the registered layout.
    pub fn load_values(&mut self, values: Vec<(String, Tensor)>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(NeuralError::Checkpoint(format!(
                "checkpoint has {} parameters, model expects {}",
                values.len(),
                self.params.len()
            )));
        }
        for (name, tensor) in values {
            let id = self
                .id(&name)
                .ok_or_else(|| NeuralError::UnknownParameter(name.clone()))?;
            let p = &mut self.params[id.0];
            if p.value.shape() != tensor.shape() {
                return Err(NeuralError::ShapeMismatch {
                    op: "load_values",
                    left: p.value.shape().to_vec(),
                    right: tensor.shape().to_vec(),
                });
            }
            p.value = tensor;
        }
        Ok(())
    }

    /// Total number of scalar values in trainable parameters.
    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }
}
