use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossConfig;

/// Largest number of remaining-batch resamples per unlearning batch.
pub const MAX_OMEGA: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Batch size for training, unlearning and remaining batches.
    pub batch_size: usize,
    /// Remaining-batch resamples per unlearning batch.
    pub omega: usize,
    pub learning_rate: f64,
    /// Epochs of original training and of retraining.
    pub max_epochs: usize,
    /// Epoch cap for every unlearning method.
    pub max_unlearn_epochs: usize,
    /// Unlearning epochs between termination checks.
    pub termination_cadence: usize,
    pub seed: u64,
    /// NegGrad halts once cross-entropy on the unlearning eval set exceeds
    /// this multiple of `ln C`.
    pub neggrad_ce_cap: f64,
    pub loss: LossConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            batch_size: 64,
            omega: 1,
            learning_rate: 0.05,
            max_epochs: 30,
            max_unlearn_epochs: 50,
            termination_cadence: 1,
            seed: 0,
            neggrad_ce_cap: 10.0,
            loss: LossConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.batch_size < 2 {
            problems.push("engine.batch_size must be >= 2".to_string());
        }
        if !(1..=MAX_OMEGA).contains(&self.omega) {
            problems.push(format!("engine.omega must be in [1, {MAX_OMEGA}]"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            problems.push("engine.learning_rate must be a finite number >= 0".to_string());
        }
        if self.termination_cadence == 0 {
            problems.push("engine.termination_cadence must be >= 1".to_string());
        }
        if !(self.neggrad_ce_cap.is_finite() && self.neggrad_ce_cap > 0.0) {
            problems.push("engine.neggrad_ce_cap must be > 0".to_string());
        }
        if let Err(Error::Config(mut p)) = self.loss.validate() {
            problems.append(&mut p);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        EngineConfig::default().validate().unwrap();
    }

    #[test]
    fn every_violation_is_listed() {
        let cfg = EngineConfig {
            batch_size: 1,
            omega: 5,
            learning_rate: -1.0,
            termination_cadence: 0,
            loss: LossConfig { temperature: -1.0, ..Default::default() },
            ..Default::default()
        };
        match cfg.validate() {
            Err(Error::Config(p)) => assert_eq!(p.len(), 5, "{p:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
