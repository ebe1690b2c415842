//! Datasets, batches, and on-disk readers.

mod batch;
mod cifar;
mod idx;
mod synthetic;

pub use batch::{batches, Augment, BatchIter};
pub use cifar::{load_cifar_binary, parse_cifar_binary, CifarLayout};
pub use idx::{load_idx, parse_idx_images, parse_idx_labels};
pub use synthetic::{load_synthetic, SyntheticKind};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// In-memory classification dataset; features are stored flat, sample-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f32>,
    sample_shape: Vec<usize>,
    labels: Vec<usize>,
    num_classes: usize,
    split: Split,
}

/// Train and test halves produced together.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSplits {
    pub train: Dataset,
    pub test: Dataset,
}

impl Dataset {
    pub fn new(
        features: Vec<f32>,
        sample_shape: Vec<usize>,
        labels: Vec<usize>,
        num_classes: usize,
        split: Split,
    ) -> Result<Self> {
        let per: usize = sample_shape.iter().product();
        if per == 0 || features.len() != per * labels.len() {
            return Err(Error::config(format!(
                "{} feature values do not form {} samples of shape {sample_shape:?}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::config(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Dataset {
            features,
            sample_shape,
            labels,
            num_classes,
            split,
        })
    }

    /// Relabels the split tag.
    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Widens the class count, e.g. so train and test agree.
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        if num_classes < self.num_classes {
            return Err(Error::config(format!(
                "cannot shrink {} classes to {num_classes}",
                self.num_classes
            )));
        }
        self.num_classes = num_classes;
        Ok(self)
    }

    /// Concatenates datasets of identical sample shape, class count and split.
    pub fn concat(parts: Vec<Dataset>) -> Result<Dataset> {
        let mut it = parts.into_iter();
        let mut out = it
            .next()
            .ok_or_else(|| Error::arg("nothing to concatenate"))?;
        for d in it {
            if d.sample_shape != out.sample_shape
                || d.num_classes != out.num_classes
                || d.split != out.split
            {
                return Err(Error::config(
                    "datasets to concatenate disagree in shape, classes or split",
                ));
            }
            out.features.extend(d.features);
            out.labels.extend(d.labels);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.sample_len();
        &self.features[i * n..(i + 1) * n]
    }

    /// Gathers the given sample indices into a batch.
    pub fn gather(&self, idx: &[usize]) -> LabeledBatch {
        let n = self.sample_len();
        let mut features = Vec::with_capacity(idx.len() * n);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            features.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        LabeledBatch {
            features,
            sample_len: n,
            labels,
        }
    }

    /// The whole dataset as one batch, in stored order.
    pub fn as_batch(&self) -> LabeledBatch {
        LabeledBatch {
            features: self.features.clone(),
            sample_len: self.sample_len(),
            labels: self.labels.clone(),
        }
    }

    /// Consecutive chunks of at most `size` samples in stored order.
    pub fn chunks(&self, size: usize) -> impl Iterator<Item = LabeledBatch> + '_ {
        let size = size.max(1);
        (0..self.len())
            .step_by(size)
            .map(move |s| self.gather(&(s..(s + size).min(self.len())).collect::<Vec<_>>()))
    }
}

/// Batch-major features plus labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBatch {
    features: Vec<f32>,
    sample_len: usize,
    labels: Vec<usize>,
}

impl LabeledBatch {
    pub fn new(features: Vec<f32>, sample_len: usize, labels: Vec<usize>) -> Result<Self> {
        if sample_len == 0 || features.len() != sample_len * labels.len() {
            return Err(Error::config(format!(
                "{} features cannot hold {} samples of length {sample_len}",
                features.len(),
                labels.len()
            )));
        }
        Ok(LabeledBatch {
            features,
            sample_len,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.sample_len
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}
