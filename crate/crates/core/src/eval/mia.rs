//! Membership-inference verification.
//!
//! The attack sees only model outputs: each sample becomes its softmax
//! vector sorted in descending order. A logistic classifier is fitted to
//! separate remaining training samples (members, label 1) from test samples
//! (non-members, label 0), then applied to the unlearning samples and to
//! held-out members. A sample counts as a member when the attack's
//! probability is strictly above 0.5.

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, UnlearnTask};
use crate::error::{Error, Result};
use crate::model::ModelParameters;
use crate::numerics::Tensor;
use crate::rng;

/// Upper bound on the per-side attack set size.
pub const MIA_SET_CAP: usize = 1000;
const VALIDATION_FRACTION: f64 = 0.2;
const L2_PENALTY: f64 = 1e-3;
const FIT_LEARNING_RATE: f64 = 0.5;
const FIT_MAX_ITERS: usize = 20_000;
const FIT_GRAD_TOL: f64 = 1e-10;

/// Softmax outputs with components sorted in descending order.
pub fn attack_features(model: &ModelParameters, features: &Tensor) -> Result<Tensor> {
    let probs = model.forward(features)?.softmax_rows()?;
    let (n, c) = probs.dims2();
    let mut out = Vec::with_capacity(n * c);
    for r in 0..n {
        let mut row = probs.row(r).to_vec();
        row.sort_by(|a, b| b.total_cmp(a));
        out.extend(row);
    }
    Tensor::matrix(n, c, out)
}

/// Standardized logistic regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl AttackModel {
    /// An attack with raw weights over unstandardized features.
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        let d = weights.len();
        AttackModel {
            weights,
            bias,
            feature_mean: vec![0.0; d],
            feature_std: vec![1.0; d],
        }
    }

    fn standardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        let x = self.standardize(row);
        sigmoid(self.bias + x.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>())
    }

    pub fn is_member(&self, row: &[f64]) -> bool {
        self.probability(row) > 0.5
    }

    /// Fits by full-batch gradient descent on the L2-penalized log loss
    /// until the gradient norm falls below tolerance.
    pub fn fit(rows: &[Vec<f64>], labels: &[bool]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || n != labels.len() {
            return Err(Error::EmptySet("attack training set".into()));
        }
        let d = rows[0].len();
        let mut mean = vec![0.0; d];
        for r in rows {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n as f64);
        }
        let mut std = vec![0.0; d];
        for r in rows {
            std.iter_mut().zip(r).zip(&mean).for_each(|((s, v), m)| *s += (v - m) * (v - m) / n as f64);
        }
        let std: Vec<f64> = std.into_iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        let mut model = AttackModel {
            weights: vec![0.0; d],
            bias: 0.0,
            feature_mean: mean,
            feature_std: std,
        };
        let xs: Vec<Vec<f64>> = rows.iter().map(|r| model.standardize(r)).collect();
        for _ in 0..FIT_MAX_ITERS {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (x, &y) in xs.iter().zip(labels) {
                let p = sigmoid(model.bias + x.iter().zip(&model.weights).map(|(a, w)| a * w).sum::<f64>());
                let err = p - if y { 1.0 } else { 0.0 };
                gw.iter_mut().zip(x).for_each(|(g, v)| *g += err * v / n as f64);
                gb += err / n as f64;
            }
            gw.iter_mut().zip(&model.weights).for_each(|(g, w)| *g += L2_PENALTY * w);
            let norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
            model.weights.iter_mut().zip(&gw).for_each(|(w, g)| *w -= FIT_LEARNING_RATE * g);
            model.bias -= FIT_LEARNING_RATE * gb;
            if norm < FIT_GRAD_TOL {
                break;
            }
        }
        Ok(model)
    }
}

/// A fitted attack plus the data bookkeeping needed to test it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedAttack {
    pub attack: AttackModel,
    pub validation_accuracy: f64,
    /// Positions in `D^r_tr` used as training members.
    pub member_positions: Vec<usize>,
    /// Positions in `D_ts` used as non-members.
    pub nonmember_positions: Vec<usize>,
    /// Positions in `D^r_tr` never shown to the attack.
    pub heldout_positions: Vec<usize>,
}

/// Samples balanced member/non-member sets of size
/// `m = min(1000, |D^r_tr|/2, |D_ts|/2)`, fits the attack on 80% and
/// reports accuracy on the other 20%.
pub fn mia_train(model: &ModelParameters, task: &UnlearnTask, split_seed: u64) -> Result<TrainedAttack> {
    let remain = task.remain_train();
    let test = task.test();
    let m = MIA_SET_CAP.min(remain.len() / 2).min(test.len() / 2);
    if m < 2 {
        return Err(Error::EmptySet(format!(
            "membership inference needs at least 4 remaining and 4 test samples (have {} and {})",
            remain.len(),
            test.len()
        )));
    }
    let mut shuffled_remain = index::sample(&mut rng::stream(split_seed, "mia-members"), remain.len(), remain.len()).into_vec();
    let heldout_positions = shuffled_remain.split_off(m);
    let member_positions = shuffled_remain;
    let nonmember_positions = index::sample(&mut rng::stream(split_seed, "mia-nonmembers"), test.len(), m).into_vec();

    let member_feats = attack_features(model, &remain.features().select_rows(&member_positions)?)?;
    let nonmember_feats = attack_features(model, &test.features().select_rows(&nonmember_positions)?)?;
    let mut examples: Vec<(Vec<f64>, bool)> = (0..m)
        .map(|r| (member_feats.row(r).to_vec(), true))
        .chain((0..m).map(|r| (nonmember_feats.row(r).to_vec(), false)))
        .collect();
    examples.shuffle(&mut rng::stream(split_seed, "mia-split"));
    let n_val = ((examples.len() as f64) * VALIDATION_FRACTION).round().max(1.0) as usize;
    let (val, fit) = examples.split_at(n_val);
    let (rows, labels): (Vec<Vec<f64>>, Vec<bool>) = fit.iter().cloned().unzip();
    let attack = AttackModel::fit(&rows, &labels)?;
    let correct = val.iter().filter(|(x, y)| attack.is_member(x) == *y).count();
    Ok(TrainedAttack {
        attack,
        validation_accuracy: correct as f64 / val.len() as f64,
        member_positions,
        nonmember_positions,
        heldout_positions,
    })
}

/// Fraction of `samples` the attack labels as members.
pub fn mia_member_rate(attack: &AttackModel, model: &ModelParameters, samples: &Dataset) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySet("member-rate sample set".into()));
    }
    let feats = attack_features(model, samples.features())?;
    let members = (0..feats.rows()).filter(|&r| attack.is_member(feats.row(r))).count();
    Ok(members as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiaReport {
    /// Member prediction rate on `D^u_tr`.
    pub unlearn_member_rate: f64,
    /// Member prediction rate on remaining samples held out from attack training.
    pub heldout_member_rate: f64,
    pub attack_validation_accuracy: f64,
    pub members: usize,
    pub nonmembers: usize,
    pub heldout: usize,
    pub unlearn: usize,
    pub split_seed: u64,
}

impl MiaReport {
    /// `heldout_member_rate - unlearn_member_rate`
    pub fn gap(&self) -> f64 {
        self.heldout_member_rate - self.unlearn_member_rate
    }
}

/// Trains the attack against `model` and reports member rates on the
/// unlearning set and on as many held-out members.
pub fn mia_report(model: &ModelParameters, task: &UnlearnTask, split_seed: u64) -> Result<MiaReport> {
    let trained = mia_train(model, task, split_seed)?;
    let remain = task.remain_train();
    let n_heldout = trained.heldout_positions.len().min(task.unlearn_train().len().max(trained.member_positions.len()));
    let heldout = remain.subset(&trained.heldout_positions[..n_heldout])?;
    Ok(MiaReport {
        unlearn_member_rate: mia_member_rate(&trained.attack, model, task.unlearn_train())?,
        heldout_member_rate: mia_member_rate(&trained.attack, model, &heldout)?,
        attack_validation_accuracy: trained.validation_accuracy,
        members: trained.member_positions.len(),
        nonmembers: trained.nonmember_positions.len(),
        heldout: n_heldout,
        unlearn: task.unlearn_train().len(),
        split_seed,
    })
}
