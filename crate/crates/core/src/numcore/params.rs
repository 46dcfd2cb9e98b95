use std::collections::HashMap;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of trainable tensors.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<S> {
    tensors: Vec<Tensor<S>>,
    names: Vec<String>,
    by_name: HashMap<String, ParamId>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            tensors: Vec::new(),
            names: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    /// Registers `tensor` as a trainable parameter under `name`.
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<S>) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name `{name}`"
        );
        let id = ParamId(self.tensors.len());
        self.tensors.push(tensor.trainable());
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        id
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<S>)> {
        self.tensors
            .iter()
            .zip(&self.names)
            .enumerate()
            .map(|(i, (t, n))| (ParamId(i), n.as_str(), t))
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.tensors[id.0].frozen = frozen;
    }

    pub fn freeze_all(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.frozen = true);
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.ids().filter(|&id| self.get(id).is_trainable()).collect()
    }

    /// Number of scalar entries an optimizer would update.
    pub fn trainable_count(&self) -> usize {
        self.tensors
            .iter()
            .filter(|t| t.is_trainable())
            .map(Tensor::numel)
            .sum()
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::clear_grad);
    }

    /// Adds per-parameter gradients (as returned by `Graph::backward`).
    pub fn accumulate(&mut self, grads: &Gradients<S>) -> Result<()> {
        for (t, g) in self.tensors.iter_mut().zip(&grads.0) {
            if let Some(g) = g {
                t.accumulate_grad(g)?;
            }
        }
        Ok(())
    }
}

/// Gradients keyed by parameter index; `None` where a parameter was not
/// reached or not trainable.
#[derive(Clone, Debug)]
pub struct Gradients<S>(pub(crate) Vec<Option<Vec<S>>>);

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, id: ParamId) -> Option<&[S]> {
        self.0.get(id.0).and_then(|g| g.as_deref())
    }
}
