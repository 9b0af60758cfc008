//! Named parameter store with deterministic iteration order.

use std::collections::HashMap;

use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct ParamEntry {
    pub tensor: Tensor,
    pub trainable: bool,
}

/// Ordered map of parameter name to (tensor, trainable flag).
///
/// Iteration follows insertion order, so training runs are reproducible
/// given a seed. Frozen entries are never touched by the optimizer.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<(String, ParamEntry)>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter name `{name}`")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, ParamEntry { tensor, trainable }));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1.tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = *self.index.get(name)?;
        Some(&mut self.entries[i].1.tensor)
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn entry_mut(&mut self, name: &str) -> Option<&mut ParamEntry> {
        let i = *self.index.get(name)?;
        Some(&mut self.entries[i].1)
    }

    /// Entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(n, e)| (n.as_str(), e))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamEntry)> {
        self.entries.iter_mut().map(|(n, e)| (n.as_str(), e))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Total number of scalar parameters.
    pub fn total_len(&self) -> usize {
        self.entries.iter().map(|(_, e)| e.tensor.len()).sum()
    }

    /// Set the trainable flag per entry from a predicate on the name.
    pub fn set_trainable_where(&mut self, pred: impl Fn(&str) -> bool) {
        for (name, entry) in self.entries.iter_mut() {
            entry.trainable = pred(name);
        }
    }

    pub fn clear_grads(&mut self) {
        for (_, entry) in self.entries.iter_mut() {
            entry.tensor.clear_grad();
        }
    }
}
