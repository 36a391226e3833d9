//! Per-class feature prototypes.
//!
//! After a task finishes training, each of its entity classes is summarized
//! by the arithmetic mean of the encoder features of that class's tokens in
//! the task's training set. The mean vectors go into a store, one per class,
//! and are frozen: later tasks read them as classification targets but never
//! modify them, and no training sequences are retained.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TaggerModel;
use crate::schema::{TaskDataset, O_INDEX};

/// Frozen class center: the feature mean of one entity class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub class_id: usize,
    pub vector: Vec<f64>,
    pub created_at_task: usize,
    /// Number of tokens averaged into `vector`.
    pub sample_count: usize,
}

/// One prototype per learned entity class, keyed by class index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrototypeStore {
    protos: BTreeMap<usize, Prototype>,
}

impl PrototypeStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.protos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.protos.is_empty()
    }

    pub fn get(&self, class_id: usize) -> Option<&Prototype> {
        self.protos.get(&class_id)
    }

    /// Class indices currently represented, ascending.
    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.protos.keys().copied()
    }

    /// `(class, vector)` pairs in ascending class order, ready for the
    /// prototype loss.
    pub fn as_loss_inputs(&self) -> Vec<(usize, &[f64])> {
        self.protos
            .values()
            .map(|p| (p.class_id, p.vector.as_slice()))
            .collect()
    }

    /// Inserts freshly computed prototypes. Entries are immutable once in;
    /// attempting to overwrite a class is an error, as is storing one for
    /// the non-entity class.
    pub fn store_and_freeze(&mut self, protos: Vec<Prototype>) -> Result<()> {
        for p in &protos {
            if p.class_id == O_INDEX {
                return Err(Error::Config(
                    "the non-entity class never gets a prototype".into(),
                ));
            }
            if self.protos.contains_key(&p.class_id) {
                return Err(Error::Config(format!(
                    "class {} already has a frozen prototype",
                    p.class_id
                )));
            }
            if p.sample_count == 0 || p.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "prototype for class {} is degenerate",
                    p.class_id
                )));
            }
        }
        for p in protos {
            self.protos.insert(p.class_id, p);
        }
        Ok(())
    }
}

/// Arithmetic mean of equal-length vectors. Errors when the iterator is
/// empty.
pub(crate) fn mean_vectors<'a>(
    dim: usize,
    vectors: impl IntoIterator<Item = &'a [f64]>,
) -> Result<(Vec<f64>, usize)> {
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for v in vectors {
        if v.len() != dim {
            return Err(Error::Shape(format!(
                "feature of length {} in a dimension-{dim} mean",
                v.len()
            )));
        }
        for (s, &x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::Data("mean of zero vectors".into()));
    }
    for s in &mut sum {
        *s /= count as f64;
    }
    Ok((sum, count))
}

/// Computes one prototype per requested class from the dataset's tokens: the
/// mean encoder feature over tokens whose current label is that class.
///
/// A class with no tokens in the dataset is an error — a silent zero vector
/// would poison later training.
pub fn compute_prototypes(
    model: &TaggerModel,
    dataset: &TaskDataset,
    classes: &[usize],
) -> Result<Vec<Prototype>> {
    if classes.contains(&O_INDEX) {
        return Err(Error::Config(
            "the non-entity class never gets a prototype".into(),
        ));
    }
    let dim = model.feature_dim();
    // One forward pass per sequence, shared by all requested classes.
    let mut per_class: BTreeMap<usize, Vec<Vec<f64>>> =
        classes.iter().map(|&c| (c, Vec::new())).collect();
    for (seq, labels) in dataset.sequences.iter().zip(&dataset.current_labels) {
        let mut pass: Option<crate::model::ForwardPass> = None;
        for (j, &label) in labels.iter().enumerate() {
            if let Some(bucket) = per_class.get_mut(&label) {
                let pass = pass.get_or_insert_with(|| model.forward(&seq.tokens));
                bucket.push(pass.features[j].clone());
            }
        }
    }
    let mut out = Vec::with_capacity(classes.len());
    for (&class, feats) in &per_class {
        let (vector, sample_count) = mean_vectors(dim, feats.iter().map(|f| f.as_slice()))
            .map_err(|_| {
                Error::Data(format!(
                    "class {class} has no tokens in task {}'s training data",
                    dataset.task_id
                ))
            })?;
        out.push(Prototype {
            class_id: class,
            vector,
            created_at_task: dataset.task_id,
            sample_count,
        });
    }
    Ok(out)
}
