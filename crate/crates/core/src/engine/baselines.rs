//! Cross-entropy training and the retrain, finetune and NegGrad baselines.

use super::record::{EpochMetrics, Method, RunRecord, TerminationReason};
use super::termination::evaluate_termination;
use super::{as_divergence, ce_step, check_compatible, check_task, mean, EngineConfig, Timer};
use crate::data::{batches, BatchSource, Dataset, EvalSets, UnlearnTask};
use crate::error::Result;
use crate::losses::cross_entropy;
use crate::model::{ModelArchitecture, ModelParameters};
use crate::rng::derive_seed;

fn ce_epoch(
    params: &mut ModelParameters,
    data: &Dataset,
    cfg: &EngineConfig,
    epoch: usize,
    tag: &str,
    step: f64,
    source: BatchSource,
) -> Result<Vec<f64>> {
    let seed = derive_seed(cfg.seed, tag, epoch as u64);
    let mut losses = Vec::new();
    for (b, batch) in batches(data, cfg.batch_size, seed, false, source)?.iter().enumerate() {
        let loss = ce_step(params, batch, step).map_err(|e| as_divergence(e, epoch, b))?;
        if !loss.is_finite() {
            return Err(super::Error::Divergence { epoch, batch: b });
        }
        losses.push(loss);
    }
    Ok(losses)
}

/// Mini-batch cross-entropy descent for `cfg.max_epochs` epochs from `params`.
pub fn train_from(
    mut params: ModelParameters,
    data: &Dataset,
    cfg: &EngineConfig,
    method: Method,
) -> Result<(ModelParameters, RunRecord)> {
    cfg.validate()?;
    check_compatible(params.architecture(), data)?;
    let timer = Timer::start();
    let mut record = RunRecord::new(method, cfg);
    for epoch in 1..=cfg.max_epochs {
        let losses = ce_epoch(&mut params, data, cfg, epoch, "train-epoch", -cfg.learning_rate, BatchSource::Remain)?;
        record.batches_processed += losses.len();
        record.gradient_steps += losses.len();
        record.epochs.push(EpochMetrics {
            epoch,
            gradient_steps: losses.len(),
            mean_loss: mean(&losses),
            mean_ul_loss: None,
            mean_ce_loss: Some(mean(&losses)),
            skipped_anchor_steps: None,
            termination_check: None,
        });
    }
    record.termination_reason = TerminationReason::EpochCap;
    record.duration_seconds = timer.seconds();
    Ok((params, record))
}

/// Trains a fresh model (initialized from `cfg.seed`) on `data`.
pub fn train(arch: &ModelArchitecture, data: &Dataset, cfg: &EngineConfig) -> Result<(ModelParameters, RunRecord)> {
    cfg.validate()?;
    let params = ModelParameters::init(arch, cfg.seed)?;
    train_from(params, data, cfg, Method::Train)
}

/// The reference model: fresh initialization trained on the remaining set only.
pub fn retrain(arch: &ModelArchitecture, task: &UnlearnTask, cfg: &EngineConfig) -> Result<(ModelParameters, RunRecord)> {
    cfg.validate()?;
    let params = ModelParameters::init(arch, cfg.seed)?;
    train_from(params, task.remain_train(), cfg, Method::Retrain)
}

/// Continues cross-entropy descent on the remaining set until the task's
/// termination predicate holds.
pub fn unlearn_finetune(
    params: &ModelParameters,
    task: &UnlearnTask,
    cfg: &EngineConfig,
) -> Result<(ModelParameters, RunRecord)> {
    cfg.validate()?;
    check_task(params, task)?;
    let timer = Timer::start();
    let mut params = params.clone();
    let mut record = RunRecord::new(Method::Finetune, cfg);
    for epoch in 1..=cfg.max_unlearn_epochs {
        let losses = ce_epoch(
            &mut params,
            task.remain_train(),
            cfg,
            epoch,
            "finetune-epoch",
            -cfg.learning_rate,
            BatchSource::Remain,
        )?;
        record.batches_processed += losses.len();
        record.gradient_steps += losses.len();
        let check = if epoch % cfg.termination_cadence == 0 {
            Some(evaluate_termination(&params, task)?)
        } else {
            None
        };
        record.epochs.push(EpochMetrics {
            epoch,
            gradient_steps: losses.len(),
            mean_loss: mean(&losses),
            mean_ul_loss: None,
            mean_ce_loss: Some(mean(&losses)),
            skipped_anchor_steps: None,
            termination_check: check,
        });
        if check.is_some_and(|c| c.satisfied) {
            record.termination_reason = TerminationReason::ConditionMet;
            break;
        }
    }
    record.duration_seconds = timer.seconds();
    Ok((params, record))
}

fn unlearn_eval_set(task: &UnlearnTask) -> &Dataset {
    match task.eval_sets() {
        EvalSets::Class { unlearn_test } => unlearn_test,
        EvalSets::Sample { unlearn, .. } => unlearn,
    }
}

/// Gradient ascent on the cross-entropy of the unlearning set.
///
/// A divergence guard stops the run (reason `error`) as soon as the
/// cross-entropy on the unlearning evaluation set exceeds
/// `cfg.neggrad_ce_cap · ln C`.
pub fn unlearn_neggrad(
    params: &ModelParameters,
    task: &UnlearnTask,
    cfg: &EngineConfig,
) -> Result<(ModelParameters, RunRecord)> {
    cfg.validate()?;
    check_task(params, task)?;
    let timer = Timer::start();
    let mut params = params.clone();
    let mut record = RunRecord::new(Method::Neggrad, cfg);
    let cap = cfg.neggrad_ce_cap * (task.num_classes() as f64).ln();
    let guard_set = unlearn_eval_set(task);
    'epochs: for epoch in 1..=cfg.max_unlearn_epochs {
        let seed = derive_seed(cfg.seed, "neggrad-epoch", epoch as u64);
        let mut losses = Vec::new();
        for (b, batch) in batches(task.unlearn_train(), cfg.batch_size, seed, false, BatchSource::Unlearn)?
            .iter()
            .enumerate()
        {
            let loss = ce_step(&mut params, batch, cfg.learning_rate).map_err(|e| as_divergence(e, epoch, b))?;
            losses.push(loss);
            record.batches_processed += 1;
            record.gradient_steps += 1;
            let guard = cross_entropy(&params.forward(guard_set.features())?, guard_set.labels());
            let tripped = match guard {
                Ok(ce) if ce <= cap => None,
                Ok(ce) => Some(format!("divergence guard: cross-entropy {ce:.4} exceeds cap {cap:.4}")),
                Err(e) => Some(format!("divergence guard: {e}")),
            };
            if let Some(detail) = tripped {
                record.epochs.push(EpochMetrics {
                    epoch,
                    gradient_steps: losses.len(),
                    mean_loss: mean(&losses),
                    mean_ul_loss: None,
                    mean_ce_loss: Some(mean(&losses)),
                    skipped_anchor_steps: None,
                    termination_check: None,
                });
                record.termination_reason = TerminationReason::Error;
                record.detail = Some(detail);
                break 'epochs;
            }
        }
        let check = if epoch % cfg.termination_cadence == 0 {
            Some(evaluate_termination(&params, task)?)
        } else {
            None
        };
        record.epochs.push(EpochMetrics {
            epoch,
            gradient_steps: losses.len(),
            mean_loss: mean(&losses),
            mean_ul_loss: None,
            mean_ce_loss: Some(mean(&losses)),
            skipped_anchor_steps: None,
            termination_check: check,
        });
        if check.is_some_and(|c| c.satisfied) {
            record.termination_reason = TerminationReason::ConditionMet;
            break;
        }
    }
    record.duration_seconds = timer.seconds();
    Ok((params, record))
}
