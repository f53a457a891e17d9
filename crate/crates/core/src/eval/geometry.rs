//! Where unlearning samples sit relative to remaining-class centroids.

use serde::{Deserialize, Serialize};

use crate::data::UnlearnTask;
use crate::error::Result;
use crate::model::ModelParameters;
use crate::numerics::Tensor;

/// Centroids with norm below this are flagged degenerate.
const DEGENERATE_NORM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCentroid {
    pub class: usize,
    pub count: usize,
    /// Mean embedding; `None` when the class has no samples.
    pub centroid: Option<Vec<f64>>,
    /// The mean is (numerically) the zero vector and has no direction.
    pub degenerate: bool,
}

impl ClassCentroid {
    fn cosine(&self, z: &[f64]) -> Option<f64> {
        let c = self.centroid.as_ref().filter(|_| !self.degenerate)?;
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        Some(z.iter().zip(c).map(|(a, b)| a * b).sum::<f64>() / norm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGeometry {
    /// Training-row index of the unlearning sample.
    pub index: usize,
    pub label: usize,
    /// Cosine similarity to the remaining centroid of its own class.
    pub own_similarity: Option<f64>,
    /// Largest cosine similarity to any other class's remaining centroid.
    pub max_other_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryDiagnostics {
    pub centroids: Vec<ClassCentroid>,
    pub samples: Vec<SampleGeometry>,
    pub mean_own_similarity: Option<f64>,
    pub mean_max_other_similarity: Option<f64>,
}

/// Per-class mean of `embeddings` rows.
pub fn centroids(embeddings: &Tensor, labels: &[usize], num_classes: usize) -> Vec<ClassCentroid> {
    let d = embeddings.cols();
    let mut sums = vec![vec![0.0; d]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (r, &y) in labels.iter().enumerate() {
        counts[y] += 1;
        sums[y].iter_mut().zip(embeddings.row(r)).for_each(|(s, v)| *s += v);
    }
    sums.into_iter()
        .zip(counts)
        .enumerate()
        .map(|(class, (sum, count))| {
            if count == 0 {
                return ClassCentroid { class, count, centroid: None, degenerate: false };
            }
            let c: Vec<f64> = sum.into_iter().map(|s| s / count as f64).collect();
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            ClassCentroid { class, count, centroid: Some(c), degenerate: norm < DEGENERATE_NORM }
        })
        .collect()
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

/// Embeds the remaining set and the unlearning set under `model` and
/// measures each unlearning sample against the remaining-class centroids.
///
/// For class tasks the unlearning class has no remaining centroid, so
/// `own_similarity` is `None` for every sample.
pub fn embedding_geometry(model: &ModelParameters, task: &UnlearnTask) -> Result<GeometryDiagnostics> {
    let remain = task.remain_train();
    let cents = centroids(&model.encode(remain.features())?, remain.labels(), task.num_classes());
    let unlearn = task.unlearn_train();
    let z = model.encode(unlearn.features())?;
    let samples: Vec<SampleGeometry> = task
        .unlearn_indices()
        .iter()
        .zip(unlearn.labels())
        .enumerate()
        .map(|(r, (&index, &label))| {
            let row = z.row(r);
            let own_similarity = cents[label].cosine(row);
            let max_other_similarity = cents
                .iter()
                .filter(|c| c.class != label)
                .filter_map(|c| c.cosine(row))
                .fold(None, |best: Option<f64>, s| Some(best.map_or(s, |b| b.max(s))));
            SampleGeometry { index, label, own_similarity, max_other_similarity }
        })
        .collect();
    Ok(GeometryDiagnostics {
        mean_own_similarity: mean_of(samples.iter().map(|s| s.own_similarity)),
        mean_max_other_similarity: mean_of(samples.iter().map(|s| s.max_other_similarity)),
        centroids: cents,
        samples,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One row per unlearning sample; `before` columns are empty when absent.
pub fn geometry_csv(after: &GeometryDiagnostics, before: Option<&GeometryDiagnostics>) -> String {
    let mut out = String::from("index,label,own_similarity,max_other_similarity,own_similarity_before,max_other_similarity_before\n");
    for (i, s) in after.samples.iter().enumerate() {
        let b = before.and_then(|b| b.samples.get(i));
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.index,
            s.label,
            cell(s.own_similarity),
            cell(s.max_other_similarity),
            cell(b.and_then(|b| b.own_similarity)),
            cell(b.and_then(|b| b.max_other_similarity)),
        ));
    }
    out
}
