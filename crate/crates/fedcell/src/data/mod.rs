//! Dataset ingestion and the non-IID label-shard partitioner.

mod cifar10;
mod partition;
mod synthetic;

pub use cifar10::load_cifar10;
pub use partition::partition;
pub use synthetic::{make_synthetic, SyntheticParams};

use crate::error::{Result, SimError};
use crate::nn::Batch;

/// Flattened samples with integer class labels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
}

impl LabeledSet {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize) -> Result<Self> {
        if features.len() != labels.len() * dim {
            return Err(SimError::Config(format!(
                "feature buffer holds {} values, expected {} x {dim}",
                features.len(),
                labels.len()
            )));
        }
        Ok(Self { features, labels, dim })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features_of(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Copies the given rows into a minibatch.
    pub fn batch(&self, indices: &[usize], num_classes: usize) -> Result<Batch> {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.features_of(i));
            labels.push(self.labels[i]);
        }
        Batch::new(inputs, labels, self.dim, num_classes)
    }

    /// Subset by row indices (copying).
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.features_of(i));
            labels.push(self.labels[i]);
        }
        Self { features, labels, dim: self.dim }
    }

    pub fn count_label(&self, label: usize) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Cifar10Binary,
    Synthetic,
}

/// A loaded dataset: disjoint train and test pools over the same classes.
#[derive(Debug, Clone)]
pub struct DatasetSource {
    pub kind: SourceKind,
    pub num_classes: usize,
    pub train: LabeledSet,
    pub test: LabeledSet,
}

impl DatasetSource {
    pub fn sample_dim(&self) -> usize {
        self.train.dim()
    }
}

/// One client's data: exclusive train shard, held-out validation, and the
/// full test pool restricted to the client's label set.
#[derive(Debug, Clone)]
pub struct UserSplit {
    /// The client's label set, sorted ascending.
    pub labels: Vec<usize>,
    pub train: LabeledSet,
    pub validation: LabeledSet,
    pub test: LabeledSet,
}
