use serde::{Deserialize, Serialize};

use super::spec::ParamScope;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One named parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerEntry<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
}

impl<T> LayerEntry<T> {
    /// Weights (rank ≥ 2) are prunable; biases are not.
    pub fn is_prunable(&self) -> bool {
        self.shape.len() >= 2
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotMeta {
    pub epoch: u32,
    pub seed: u64,
    pub arch_hash: String,
}

/// Full parameter state of a model at one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSnapshot<T> {
    pub entries: Vec<LayerEntry<T>>,
    pub meta: SnapshotMeta,
}

impl<T: Scalar> WeightSnapshot<T> {
    pub fn new(entries: Vec<LayerEntry<T>>, meta: SnapshotMeta) -> Result<Self> {
        let s = WeightSnapshot { entries, meta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            let n: usize = e.shape.iter().product();
            if n != e.values.len() {
                return Err(Error::config(format!(
                    "layer {} has shape {:?} but {} values",
                    e.name,
                    e.shape,
                    e.values.len()
                )));
            }
            if self.entries[..i].iter().any(|o| o.name == e.name) {
                return Err(Error::config(format!("duplicate layer name {}", e.name)));
            }
        }
        Ok(())
    }

    pub fn count(&self, scope: ParamScope) -> usize {
        self.entries
            .iter()
            .filter(|e| scope == ParamScope::All || e.is_prunable())
            .map(LayerEntry::len)
            .sum()
    }

    pub fn prunable(&self) -> impl Iterator<Item = &LayerEntry<T>> {
        self.entries.iter().filter(|e| e.is_prunable())
    }

    pub fn prunable_mut(&mut self) -> impl Iterator<Item = &mut LayerEntry<T>> {
        self.entries.iter_mut().filter(|e| e.is_prunable())
    }

    /// All values concatenated in entry order.
    pub fn flatten(&self) -> Vec<T> {
        self.entries
            .iter()
            .flat_map(|e| e.values.iter().copied())
            .collect()
    }

    /// Same layout with values replaced from a flat vector.
    pub fn with_flat(&self, flat: &[T]) -> Result<Self> {
        if flat.len() != self.count(ParamScope::All) {
            return Err(Error::config(format!(
                "flat vector has {} values, snapshot has {}",
                flat.len(),
                self.count(ParamScope::All)
            )));
        }
        let mut out = self.clone();
        let mut off = 0;
        for e in &mut out.entries {
            let n = e.values.len();
            e.values.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(out)
    }

    /// Same names and shapes, in the same order.
    pub fn same_layout<U>(&self, other: &WeightSnapshot<U>) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    pub fn with_epoch(mut self, epoch: u32) -> Self {
        self.meta.epoch = epoch;
        self
    }

    pub fn cast<U: Scalar>(&self) -> WeightSnapshot<U> {
        WeightSnapshot {
            entries: self
                .entries
                .iter()
                .map(|e| LayerEntry {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    values: e.values.iter().map(|v| U::narrow(v.widen())).collect(),
                })
                .collect(),
            meta: self.meta.clone(),
        }
    }

    /// Bitwise equality of every value (distinguishes `0.0` from `-0.0`).
    pub fn bit_identical(&self, other: &Self) -> bool {
        self.same_layout(other)
            && self.entries.iter().zip(&other.entries).all(|(a, b)| {
                a.values
                    .iter()
                    .zip(&b.values)
                    .all(|(x, y)| x.widen().to_bits() == y.widen().to_bits())
            })
    }
}
