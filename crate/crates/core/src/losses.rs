//! Cross-entropy and the contrastive unlearning losses.
//!
//! For an unlearning batch of anchors and a remaining batch, each anchor's
//! positives are the remaining samples sharing its label and its negatives
//! are the rest. With `s(i, j) = z_i · z_j / τ` on unit-norm embeddings:
//!
//! - sample variant: `Σ_i (-1/|N_i|) Σ_{a ∈ N_i} [ s(i,a) - log Σ_{p ∈ P_i} exp s(i,p) ]`
//! - class variant:  `Σ_i (-1/|N_i|) Σ_{a ∈ N_i} [ s(i,a) - log |N_i| ]`
//!
//! Minimizing either pulls anchors toward negatives; the sample variant
//! also pushes them away from positives. Anchors without the sets a
//! variant needs contribute exactly zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossVariant {
    Sample,
    Class,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub temperature: f64,
    pub lambda_ul: f64,
    pub lambda_ce: f64,
    pub variant: LossVariant,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            temperature: 0.5,
            lambda_ul: 1.0,
            lambda_ce: 1.0,
            variant: LossVariant::Sample,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            problems.push("loss.temperature must be > 0".to_string());
        }
        if !(self.lambda_ul.is_finite() && self.lambda_ul >= 0.0) {
            problems.push("loss.lambda_ul must be >= 0".to_string());
        }
        if !(self.lambda_ce.is_finite() && self.lambda_ce >= 0.0) {
            problems.push("loss.lambda_ce must be >= 0".to_string());
        }
        if self.lambda_ul + self.lambda_ce <= 0.0 {
            problems.push("loss.lambda_ul + loss.lambda_ce must be > 0".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Positive and negative remaining-batch positions for one anchor.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnchorSets {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// Per-anchor partition of a remaining batch by label equality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContrastSets {
    anchors: Vec<AnchorSets>,
    remaining: usize,
}

pub fn build_contrast_sets(anchor_labels: &[usize], remaining_labels: &[usize]) -> ContrastSets {
    let anchors = anchor_labels
        .iter()
        .map(|&y| {
            let (positives, negatives) = (0..remaining_labels.len()).partition(|&j| remaining_labels[j] == y);
            AnchorSets { positives, negatives }
        })
        .collect();
    ContrastSets {
        anchors,
        remaining: remaining_labels.len(),
    }
}

impl ContrastSets {
    pub fn anchors(&self) -> &[AnchorSets] {
        &self.anchors
    }

    pub fn remaining_len(&self) -> usize {
        self.remaining
    }

    fn is_valid(&self, a: &AnchorSets, variant: LossVariant) -> bool {
        match variant {
            LossVariant::Sample => !a.positives.is_empty() && !a.negatives.is_empty(),
            LossVariant::Class => !a.negatives.is_empty(),
        }
    }

    /// Number of anchors that contribute under `variant`.
    pub fn valid_anchors(&self, variant: LossVariant) -> usize {
        self.anchors.iter().filter(|a| self.is_valid(a, variant)).count()
    }

    /// `-1/|N_i|` on every negative of a contributing anchor, zero elsewhere.
    fn negative_weights(&self, variant: LossVariant) -> Result<Tensor> {
        let mut w = vec![0.0; self.anchors.len() * self.remaining];
        for (i, a) in self.anchors.iter().enumerate() {
            if self.is_valid(a, variant) {
                let k = -1.0 / a.negatives.len() as f64;
                for &j in &a.negatives {
                    w[i * self.remaining + j] = k;
                }
            }
        }
        Tensor::matrix(self.anchors.len(), self.remaining, w)
    }

    fn positive_mask(&self) -> Result<Tensor> {
        let mut m = vec![0.0; self.anchors.len() * self.remaining];
        for (i, a) in self.anchors.iter().enumerate() {
            if self.is_valid(a, LossVariant::Sample) {
                for &j in &a.positives {
                    m[i * self.remaining + j] = 1.0;
                }
            }
        }
        Tensor::matrix(self.anchors.len(), self.remaining, m)
    }
}

/// `anchors · remainingᵀ / τ`, shape `[anchors, remaining]`.
pub fn scaled_similarity(tape: &Tape, anchors: Var, remaining: Var, temperature: f64) -> Result<Var> {
    let rt = tape.transpose(remaining)?;
    let dots = tape.matmul(anchors, rt)?;
    tape.scale(dots, 1.0 / temperature)
}

fn check_sets(tape: &Tape, sim: Var, sets: &ContrastSets) -> Result<()> {
    let shape = tape.shape(sim);
    if shape != [sets.anchors.len(), sets.remaining] {
        return Err(Error::Dimension {
            op: "contrastive loss",
            left: shape,
            right: vec![sets.anchors.len(), sets.remaining],
        });
    }
    Ok(())
}

/// Sample-unlearning loss from precomputed scaled similarities.
pub fn ul_sample_from_similarity(tape: &Tape, sim: Var, sets: &ContrastSets) -> Result<Var> {
    check_sets(tape, sim, sets)?;
    if sets.valid_anchors(LossVariant::Sample) == 0 {
        return Err(Error::NoValidAnchor);
    }
    let weighted = tape.mul_const(sim, sets.negative_weights(LossVariant::Sample)?)?;
    let pull = tape.sum(weighted)?;
    let lse = tape.masked_row_logsumexp(sim, sets.positive_mask()?)?;
    let push = tape.sum(lse)?;
    tape.add(pull, push)
}

/// Class-unlearning loss from precomputed scaled similarities.
pub fn ul_class_from_similarity(tape: &Tape, sim: Var, sets: &ContrastSets) -> Result<Var> {
    check_sets(tape, sim, sets)?;
    if sets.valid_anchors(LossVariant::Class) == 0 {
        return Err(Error::NoValidAnchor);
    }
    let weighted = tape.mul_const(sim, sets.negative_weights(LossVariant::Class)?)?;
    let pull = tape.sum(weighted)?;
    let damping: f64 = sets
        .anchors
        .iter()
        .filter(|a| !a.negatives.is_empty())
        .map(|a| (a.negatives.len() as f64).ln())
        .sum();
    tape.add_const(pull, &Tensor::scalar(damping)?)
}

pub fn loss_ul_sample(tape: &Tape, anchors: Var, remaining: Var, sets: &ContrastSets, temperature: f64) -> Result<Var> {
    let sim = scaled_similarity(tape, anchors, remaining, temperature)?;
    ul_sample_from_similarity(tape, sim, sets)
}

pub fn loss_ul_class(tape: &Tape, anchors: Var, remaining: Var, sets: &ContrastSets, temperature: f64) -> Result<Var> {
    let sim = scaled_similarity(tape, anchors, remaining, temperature)?;
    ul_class_from_similarity(tape, sim, sets)
}

/// Dispatches on `cfg.variant`.
pub fn loss_ul(tape: &Tape, anchors: Var, remaining: Var, sets: &ContrastSets, cfg: &LossConfig) -> Result<Var> {
    match cfg.variant {
        LossVariant::Sample => loss_ul_sample(tape, anchors, remaining, sets, cfg.temperature),
        LossVariant::Class => loss_ul_class(tape, anchors, remaining, sets, cfg.temperature),
    }
}

/// Mean cross-entropy of `logits` `[b, C]` against `labels`.
pub fn loss_ce(tape: &Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let shape = tape.shape(logits);
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::Dimension {
            op: "loss_ce",
            left: shape,
            right: vec![labels.len()],
        });
    }
    let (b, c) = (shape[0], shape[1]);
    let mut w = vec![0.0; b * c];
    for (r, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::Validation(format!("label {y} out of range for {c} classes")));
        }
        w[r * c + y] = -1.0 / b as f64;
    }
    let logp = tape.log_softmax_rows(logits)?;
    let picked = tape.mul_const(logp, Tensor::matrix(b, c, w)?)?;
    tape.sum(picked)
}

/// Plain-value cross-entropy.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let tape = Tape::new();
    let l = tape.leaf(logits.clone());
    let loss = loss_ce(&tape, l, labels)?;
    tape.scalar_value(loss)
}

/// `λ_UL · ul + λ_CE · ce`.
pub fn loss_combined(ul: f64, ce: f64, cfg: &LossConfig) -> f64 {
    cfg.lambda_ul * ul + cfg.lambda_ce * ce
}

pub fn loss_combined_on(tape: &Tape, ul: Var, ce: Var, cfg: &LossConfig) -> Result<Var> {
    let a = tape.scale(ul, cfg.lambda_ul)?;
    let b = tape.scale(ce, cfg.lambda_ce)?;
    tape.add(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> Tensor {
        Tensor::matrix(1, v.len(), v.to_vec()).unwrap().l2_normalize().unwrap()
    }

    fn rows(rs: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rs.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn value(f: impl Fn(&Tape, Var, Var, &ContrastSets, f64) -> Result<Var>, z: &Tensor, r: &Tensor, sets: &ContrastSets, tau: f64) -> Result<f64> {
        let tape = Tape::new();
        let a = tape.leaf(z.clone());
        let b = tape.leaf(r.clone());
        let l = f(&tape, a, b, sets, tau)?;
        tape.scalar_value(l)
    }

    #[test]
    fn contrast_set_partition() {
        let sets = build_contrast_sets(&[1], &[1, 1, 2]);
        assert_eq!(sets.anchors()[0].positives, vec![0, 1]);
        assert_eq!(sets.anchors()[0].negatives, vec![2]);
        let sets = build_contrast_sets(&[0], &[1, 2, 3]);
        assert!(sets.anchors()[0].positives.is_empty());
        let sets = build_contrast_sets(&[0, 1, 2], &[0, 1, 1, 2, 0]);
        assert!(sets.anchors().iter().all(|a| a.positives.len() + a.negatives.len() == 5));
    }

    #[test]
    fn sample_loss_two_pair_arithmetic() {
        // anchor e0, positive e0 (dot 1), negative e1 (dot 0)
        let z = unit(&[1.0, 0.0]);
        let r = rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let sets = build_contrast_sets(&[0], &[0, 1]);
        let v = value(loss_ul_sample, &z, &r, &sets, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sample_loss_equal_similarity_is_zero() {
        for (s, tau) in [(0.3f64, 1.0), (-0.7, 0.1), (0.9, 2.5)] {
            let c = (1.0 - s * s).sqrt();
            let z = unit(&[1.0, 0.0, 0.0]);
            let r = rows(&[&[s, c, 0.0], &[s, 0.0, c]]);
            let sets = build_contrast_sets(&[3], &[3, 5]);
            let v = value(loss_ul_sample, &z, &r, &sets, tau).unwrap();
            assert!(v.abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn class_loss_closed_forms() {
        let z = unit(&[1.0, 0.0, 0.0]);
        let one = rows(&[&[0.0, 1.0, 0.0]]);
        let v = value(loss_ul_class, &z, &one, &build_contrast_sets(&[0], &[1]), 1.0).unwrap();
        assert_eq!(v, 0.0);
        let two = rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let v = value(loss_ul_class, &z, &two, &build_contrast_sets(&[0], &[1, 2]), 1.0).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        let aligned = rows(&[&[1.0, 0.0, 0.0]]);
        let v = value(loss_ul_class, &z, &aligned, &build_contrast_sets(&[0], &[1]), 1.0).unwrap();
        assert!((v + 1.0).abs() < 1e-15);
    }

    #[test]
    fn class_loss_ignores_positives() {
        let z = unit(&[1.0, 0.0]);
        let r = rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let with_pos = value(loss_ul_class, &z, &r, &build_contrast_sets(&[0], &[1, 0]), 1.0).unwrap();
        let only_neg = value(loss_ul_class, &z, &rows(&[&[0.0, 1.0]]), &build_contrast_sets(&[0], &[1]), 1.0).unwrap();
        assert_eq!(with_pos, only_neg);
    }

    #[test]
    fn no_valid_anchor_errors() {
        let z = unit(&[1.0, 0.0]);
        let r = rows(&[&[0.0, 1.0]]);
        // no positives for the sample variant
        let sets = build_contrast_sets(&[0], &[1]);
        assert!(matches!(value(loss_ul_sample, &z, &r, &sets, 1.0), Err(Error::NoValidAnchor)));
        // no negatives for either variant
        let sets = build_contrast_sets(&[1], &[1]);
        assert!(matches!(value(loss_ul_class, &z, &r, &sets, 1.0), Err(Error::NoValidAnchor)));
    }

    #[test]
    fn excluded_anchor_contributes_zero() {
        let z = rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let r = rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        // anchor 1 (label 7) has no positives in the remaining batch
        let both = build_contrast_sets(&[0, 7], &[0, 1]);
        let alone = build_contrast_sets(&[0], &[0, 1]);
        let v_both = value(loss_ul_sample, &z, &r, &both, 0.5).unwrap();
        let v_alone = value(loss_ul_sample, &z.select_rows(&[0]).unwrap(), &r, &alone, 0.5).unwrap();
        assert!(v_both.is_finite());
        assert_eq!(v_both, v_alone);
    }

    #[test]
    fn gradient_direction_pushes_positives_pulls_negatives() {
        let tape = Tape::new();
        let sim = tape.leaf(rows(&[&[0.4, -0.2]]));
        let sets = build_contrast_sets(&[0], &[0, 1]);
        let loss = ul_sample_from_similarity(&tape, sim, &sets).unwrap();
        let g = tape.grad(loss, &[sim]).unwrap();
        assert!(g[0].data()[0] > 0.0, "positive similarity must increase the loss");
        assert!(g[0].data()[1] < 0.0, "negative similarity must decrease the loss");
    }

    #[test]
    fn single_pair_scales_inversely_with_temperature() {
        let z = unit(&[1.0, 0.0]);
        let (sp, sn): (f64, f64) = (0.8, -0.3);
        let r = rows(&[&[sp, (1.0f64 - sp * sp).sqrt()], &[sn, -(1.0f64 - sn * sn).sqrt()]]);
        let sets = build_contrast_sets(&[0], &[0, 1]);
        let mut last = f64::INFINITY;
        for tau in [0.1, 0.25, 0.5, 1.0, 2.0] {
            let v = value(loss_ul_sample, &z, &r, &sets, tau).unwrap();
            assert!((v - (sp - sn) / tau).abs() < 1e-12);
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn cross_entropy_cases() {
        let uniform = Tensor::matrix(2, 4, vec![0.5; 8]).unwrap();
        assert!((cross_entropy(&uniform, &[1, 3]).unwrap() - 4f64.ln()).abs() < 1e-15);
        let confident = rows(&[&[0.0, 30.0, 0.0]]);
        assert!(cross_entropy(&confident, &[1]).unwrap() < 1e-12);
    }

    #[test]
    fn cross_entropy_matches_direct_formula() {
        use rand::Rng as _;
        let mut rng = crate::rng::stream(8, "ce");
        let logits = Tensor::matrix(6, 5, (0..30).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
        let labels: Vec<usize> = (0..6).map(|_| rng.random_range(0..5)).collect();
        let direct: f64 = (0..6)
            .map(|r| {
                let row = logits.row(r);
                let z: f64 = row.iter().map(|v| v.exp()).sum();
                -(row[labels[r]].exp() / z).ln()
            })
            .sum::<f64>()
            / 6.0;
        assert!((cross_entropy(&logits, &labels).unwrap() - direct).abs() < 1e-10);
    }

    #[test]
    fn combination_weights() {
        let cfg = |ul, ce| LossConfig { lambda_ul: ul, lambda_ce: ce, ..Default::default() };
        assert_eq!(loss_combined(2.0, 3.0, &cfg(1.0, 0.0)), 2.0);
        assert_eq!(loss_combined(2.0, 3.0, &cfg(0.0, 1.5)), 4.5);
        assert_eq!(loss_combined(2.0, 3.0, &cfg(1.0, 1.0)), 5.0);
        assert!(cfg(0.0, 0.0).validate().is_err());
        assert!(LossConfig { temperature: 0.0, ..Default::default() }.validate().is_err());
    }
}
