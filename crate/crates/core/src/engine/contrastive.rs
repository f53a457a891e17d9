//! Batched contrastive unlearning.
//!
//! ```text
//! while the termination predicate fails (checked after each pass):
//!     for each unlearning batch X^u (epoch permutation of D^u_tr):
//!         repeat ω times:
//!             draw X^r from D^r_tr
//!             split X^r into positives/negatives per anchor in X^u
//!             L = λ_UL · L_UL(E(X^u), E(X^r)) + λ_CE · CE(F(X^r), Y^r)
//!             θ ← θ - η ∇L
//! ```

use super::record::{EpochMetrics, Method, RunRecord, TerminationReason};
use super::termination::evaluate_termination;
use super::{as_divergence, check_task, mean, EngineConfig, Timer};
use crate::data::{batches, sample_remaining, Batch, BatchSource, TaskKind, UnlearnTask};
use crate::error::{Error, Result};
use crate::losses::{build_contrast_sets, loss_ce, loss_ul, LossConfig, LossVariant};
use crate::model::ModelParameters;
use crate::numerics::Tape;
use crate::rng::{self, derive_seed};

struct StepOutcome {
    loss: f64,
    ul: Option<f64>,
    ce: f64,
}

fn contrastive_step(
    params: &mut ModelParameters,
    unlearn: &Batch,
    remain: &Batch,
    loss_cfg: &LossConfig,
    learning_rate: f64,
) -> Result<StepOutcome> {
    let tape = Tape::new();
    let vars = params.record(&tape);
    let xu = tape.leaf(unlearn.features.clone());
    let xr = tape.leaf(remain.features.clone());
    let zu = params.encode_on(&tape, &vars, xu)?;
    let zr = params.encode_on(&tape, &vars, xr)?;
    let logits = params.head_on(&tape, &vars, zr)?;
    let ce = loss_ce(&tape, logits, &remain.labels)?;
    let ce_weighted = tape.scale(ce, loss_cfg.lambda_ce)?;

    let sets = build_contrast_sets(&unlearn.labels, &remain.labels);
    let (total, ul) = match loss_ul(&tape, zu, zr, &sets, loss_cfg) {
        Ok(ul) => {
            let ul_weighted = tape.scale(ul, loss_cfg.lambda_ul)?;
            (tape.add(ul_weighted, ce_weighted)?, Some(tape.scalar_value(ul)?))
        }
        // excluded anchors contribute zero; the step still restores X^r
        Err(Error::NoValidAnchor) => (ce_weighted, None),
        Err(e) => return Err(e),
    };
    let outcome = StepOutcome {
        loss: tape.scalar_value(total)?,
        ul,
        ce: tape.scalar_value(ce)?,
    };
    let grads = tape.grad(total, vars.vars())?;
    params.apply_update(&grads, -learning_rate)?;
    Ok(outcome)
}

/// Contrastive unlearning of `task` starting from `params`.
///
/// The loss variant follows the task: class tasks use the class variant,
/// sample tasks the sample variant, whatever `cfg.loss.variant` says.
pub fn unlearn_contrastive(
    params: &ModelParameters,
    task: &UnlearnTask,
    cfg: &EngineConfig,
) -> Result<(ModelParameters, RunRecord)> {
    cfg.validate()?;
    check_task(params, task)?;
    if task.remain_train().len() < cfg.batch_size {
        return Err(Error::Config(vec![format!(
            "engine.batch_size {} exceeds the {} remaining samples",
            cfg.batch_size,
            task.remain_train().len()
        )]));
    }
    let loss_cfg = LossConfig {
        variant: match task.kind() {
            TaskKind::Class { .. } => LossVariant::Class,
            TaskKind::Sample => LossVariant::Sample,
        },
        ..cfg.loss
    };

    let timer = Timer::start();
    let mut params = params.clone();
    let mut record = RunRecord::new(Method::Contrastive, cfg);
    record.config.loss = loss_cfg;
    let mut remain_rng = rng::stream(cfg.seed, "contrastive-remaining");

    for epoch in 1..=cfg.max_unlearn_epochs {
        let seed = derive_seed(cfg.seed, "contrastive-epoch", epoch as u64);
        let unlearn_batches = batches(task.unlearn_train(), cfg.batch_size, seed, false, BatchSource::Unlearn)?;
        let (mut losses, mut uls, mut ces) = (Vec::new(), Vec::new(), Vec::new());
        let mut skipped = 0;
        for (b, xu) in unlearn_batches.iter().enumerate() {
            for _ in 0..cfg.omega {
                let xr = sample_remaining(task, cfg.batch_size, &mut remain_rng)?;
                let out = contrastive_step(&mut params, xu, &xr, &loss_cfg, cfg.learning_rate)
                    .map_err(|e| as_divergence(e, epoch, b))?;
                losses.push(out.loss);
                ces.push(out.ce);
                match out.ul {
                    Some(ul) => uls.push(ul),
                    None => skipped += 1,
                }
            }
        }
        let steps = losses.len();
        record.batches_processed += unlearn_batches.len();
        record.gradient_steps += steps;
        if skipped == steps {
            return Err(Error::Unlearnable(format!(
                "no anchor had usable positives/negatives during epoch {epoch}; \
                 increase engine.batch_size so remaining batches cover the classes"
            )));
        }
        let check = if epoch % cfg.termination_cadence == 0 {
            Some(evaluate_termination(&params, task)?)
        } else {
            None
        };
        record.epochs.push(EpochMetrics {
            epoch,
            gradient_steps: steps,
            mean_loss: mean(&losses),
            mean_ul_loss: Some(mean(&uls)),
            mean_ce_loss: Some(mean(&ces)),
            skipped_anchor_steps: Some(skipped),
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
