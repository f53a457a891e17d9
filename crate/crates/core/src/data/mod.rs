//! Datasets, unlearning tasks and batching.

mod batch;
mod csv_io;
mod synthetic;
mod task;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub use batch::{batch_indices, batches, sample_remaining, Batch, BatchSource};
pub use csv_io::{load_csv, write_csv};
pub use synthetic::{generate_synthetic, SyntheticConfig};
pub use task::{make_task, EvalSets, TaskKind, TaskSpec, UnlearnTask, EVAL_SUBSET_CAP};

/// Per-column affine transform fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    /// Column means and population standard deviations; constant columns get std 1.
    pub fn fit(features: &Tensor) -> Self {
        let (n, d) = features.dims2();
        let mut mean = vec![0.0; d];
        for r in 0..n {
            mean.iter_mut().zip(features.row(r)).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for r in 0..n {
            for ((s, v), m) in var.iter_mut().zip(features.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Standardization { mean, std }
    }

    pub fn apply(&self, features: &Tensor) -> Result<Tensor> {
        let (n, d) = features.dims2();
        if d != self.mean.len() {
            return Err(Error::Dimension {
                op: "standardize",
                left: features.shape().to_vec(),
                right: vec![self.mean.len()],
            });
        }
        let mut out = Vec::with_capacity(n * d);
        for r in 0..n {
            for ((v, m), s) in features.row(r).iter().zip(&self.mean).zip(&self.std) {
                out.push((v - m) / s);
            }
        }
        Tensor::matrix(n, d, out)
    }
}

/// Labeled feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.shape().len() != 2 {
            return Err(Error::Dimension {
                op: "dataset",
                left: features.shape().to_vec(),
                right: vec![labels.len(), 0],
            });
        }
        if features.rows() != labels.len() {
            return Err(Error::Dimension {
                op: "dataset",
                left: features.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Validation(format!("label {bad} is not below num_classes {num_classes}")));
        }
        Ok(Dataset {
            features,
            labels,
            num_classes,
            standardization: None,
        })
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let features = self.features.select_rows(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok(Dataset {
            features,
            labels,
            num_classes: self.num_classes,
            standardization: self.standardization.clone(),
        })
    }

    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        if num_classes < self.num_classes && self.labels.iter().any(|&l| l >= num_classes) {
            return Err(Error::Validation(format!("cannot shrink to {num_classes} classes")));
        }
        self.num_classes = num_classes;
        Ok(self)
    }

    fn standardized(&self, s: &Standardization) -> Result<Dataset> {
        Ok(Dataset {
            features: s.apply(&self.features)?,
            labels: self.labels.clone(),
            num_classes: self.num_classes,
            standardization: Some(s.clone()),
        })
    }
}

/// Aligns class counts and feature widths of a train/test pair and
/// standardizes both with statistics from the training split.
pub fn prepare_pair(train: Dataset, test: Dataset) -> Result<(Dataset, Dataset)> {
    if train.dim() != test.dim() {
        return Err(Error::Dimension {
            op: "prepare_pair",
            left: train.features.shape().to_vec(),
            right: test.features.shape().to_vec(),
        });
    }
    let c = train.num_classes.max(test.num_classes);
    let train = train.with_num_classes(c)?;
    let test = test.with_num_classes(c)?;
    let s = Standardization::fit(&train.features);
    Ok((train.standardized(&s)?, test.standardized(&s)?))
}
