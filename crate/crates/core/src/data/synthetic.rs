use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::{self, Rng};

/// Isotropic Gaussian mixture, one component per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub dim: usize,
    pub per_class_train: usize,
    pub per_class_test: usize,
    pub spread: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_classes: 4,
            dim: 8,
            per_class_train: 500,
            per_class_test: 100,
            spread: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.num_classes < 2 {
            problems.push("dataset.synthetic.num_classes must be >= 2".to_string());
        }
        if self.dim < 2 {
            problems.push("dataset.synthetic.dim must be >= 2".to_string());
        }
        if self.per_class_train == 0 {
            problems.push("dataset.synthetic.per_class_train must be >= 1".to_string());
        }
        if self.per_class_test == 0 {
            problems.push("dataset.synthetic.per_class_test must be >= 1".to_string());
        }
        if !(self.spread.is_finite() && self.spread > 0.0) {
            problems.push("dataset.synthetic.spread must be a positive number".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

fn gaussian(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Class means on a sphere of radius `4·spread`, rejection-sampled until
/// every pair is at least `4·spread` apart. The radius grows if the sphere
/// is too crowded to satisfy the separation.
fn place_means(cfg: &SyntheticConfig, rng: &mut Rng) -> Vec<Vec<f64>> {
    let min_dist = 4.0 * cfg.spread;
    let mut radius = min_dist;
    loop {
        for _ in 0..2_000 {
            let means: Vec<Vec<f64>> = (0..cfg.num_classes)
                .map(|_| {
                    let dir: Vec<f64> = (0..cfg.dim).map(|_| gaussian(rng)).collect();
                    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                    dir.into_iter().map(|v| v * radius / norm).collect()
                })
                .collect();
            let separated = (0..means.len()).all(|i| {
                (i + 1..means.len()).all(|j| {
                    let d2: f64 = means[i].iter().zip(&means[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                    d2.sqrt() >= min_dist
                })
            });
            if separated {
                return means;
            }
        }
        radius *= 1.25;
    }
}

fn draw(cfg: &SyntheticConfig, means: &[Vec<f64>], per_class: usize, rng: &mut Rng) -> Result<Dataset> {
    let n = per_class * cfg.num_classes;
    let mut features = Vec::with_capacity(n * cfg.dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..per_class {
        for (k, mean) in means.iter().enumerate() {
            features.extend(mean.iter().map(|m| m + cfg.spread * gaussian(rng)));
            labels.push(k);
        }
    }
    Dataset::new(Tensor::matrix(n, cfg.dim, features)?, labels, cfg.num_classes)
}

/// Draws independent train and test splits from a Gaussian mixture.
///
/// Samples are interleaved by class (`0, 1, …, C-1, 0, 1, …`).
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    let means = place_means(cfg, &mut rng::stream(cfg.seed, "synthetic-means"));
    let train = draw(cfg, &means, cfg.per_class_train, &mut rng::stream(cfg.seed, "synthetic-train"))?;
    let test = draw(cfg, &means, cfg.per_class_test, &mut rng::stream(cfg.seed, "synthetic-test"))?;
    Ok((train, test))
}
