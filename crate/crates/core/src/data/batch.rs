use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::{Dataset, UnlearnTask};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchSource {
    Unlearn,
    Remain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub source: BatchSource,
    /// Row positions within the view the batch was drawn from.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn from_view(view: &Dataset, indices: Vec<usize>, source: BatchSource) -> Result<Batch> {
        Ok(Batch {
            features: view.features().select_rows(&indices)?,
            labels: indices.iter().map(|&i| view.labels()[i]).collect(),
            source,
            indices,
        })
    }
}

/// A seeded permutation of `0..n`, chunked into runs of at most `batch_size`.
pub fn batch_indices(n: usize, batch_size: usize, rng: &mut Rng, drop_last: bool) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::EmptySet("cannot batch an empty view".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config(vec!["batch size must be >= 1".into()]));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(order
        .chunks(batch_size)
        .filter(|c| !drop_last || c.len() == batch_size)
        .map(<[usize]>::to_vec)
        .collect())
}

/// One epoch of batches over `view`, in seeded random order.
pub fn batches(view: &Dataset, batch_size: usize, seed: u64, drop_last: bool, source: BatchSource) -> Result<Vec<Batch>> {
    let mut rng = rng::stream(seed, "batches");
    batch_indices(view.len(), batch_size, &mut rng, drop_last)?
        .into_iter()
        .map(|idx| Batch::from_view(view, idx, source))
        .collect()
}

/// Fresh uniform draw of `batch_size` remaining samples, without replacement.
pub fn sample_remaining(task: &UnlearnTask, batch_size: usize, rng: &mut Rng) -> Result<Batch> {
    let view = task.remain_train();
    if batch_size == 0 || view.len() < batch_size {
        return Err(Error::Config(vec![format!(
            "remaining batch size {batch_size} needs between 1 and {} remaining samples",
            view.len()
        )]));
    }
    let idx = index::sample(rng, view.len(), batch_size).into_vec();
    Batch::from_view(view, idx, BatchSource::Remain)
}
