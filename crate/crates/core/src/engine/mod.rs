//! Original training, contrastive unlearning and baseline unlearning methods.
//!
//! Every method runs plain mini-batch gradient descent (`θ ← θ - η∇L`, or
//! ascent for NegGrad) with a fixed learning rate. Unlearning methods share
//! the task's termination predicate, evaluated after every
//! `termination_cadence` passes over their data, and stop at the first
//! satisfied check or at `max_unlearn_epochs`.

mod baselines;
mod config;
mod contrastive;
mod record;
mod termination;

use std::time::Instant;

pub use baselines::{retrain, train, train_from, unlearn_finetune, unlearn_neggrad};
pub use config::{EngineConfig, MAX_OMEGA};
pub use contrastive::unlearn_contrastive;
pub use record::{EpochMetrics, Method, RunRecord, TerminationCheck, TerminationReason};
pub use termination::{
    check_termination_class, check_termination_sample, class_predicate, evaluate_termination, sample_predicate,
};

use crate::data::{Batch, Dataset, UnlearnTask};
use crate::error::{Error, Result};
use crate::losses::loss_ce;
use crate::model::{ModelArchitecture, ModelParameters};
use crate::numerics::Tape;

/// Dispatches an unlearning method. `Train` is not an unlearning method.
pub fn unlearn(
    method: Method,
    params: &ModelParameters,
    task: &UnlearnTask,
    cfg: &EngineConfig,
) -> Result<(ModelParameters, RunRecord)> {
    match method {
        Method::Contrastive => unlearn_contrastive(params, task, cfg),
        Method::Retrain => retrain(params.architecture(), task, cfg),
        Method::Finetune => unlearn_finetune(params, task, cfg),
        Method::Neggrad => unlearn_neggrad(params, task, cfg),
        Method::Train => Err(Error::Validation("train is not an unlearning method".into())),
    }
}

pub(crate) fn check_compatible(arch: &ModelArchitecture, data: &Dataset) -> Result<()> {
    if arch.input_dim != data.dim() || arch.num_classes < data.num_classes() {
        return Err(Error::Dimension {
            op: "model/data compatibility",
            left: vec![arch.input_dim, arch.num_classes],
            right: vec![data.dim(), data.num_classes()],
        });
    }
    Ok(())
}

pub(crate) fn check_task(params: &ModelParameters, task: &UnlearnTask) -> Result<()> {
    let arch = params.architecture();
    if arch.input_dim != task.input_dim() || arch.num_classes != task.num_classes() {
        return Err(Error::Dimension {
            op: "model/task compatibility",
            left: vec![arch.input_dim, arch.num_classes],
            right: vec![task.input_dim(), task.num_classes()],
        });
    }
    Ok(())
}

/// Numerical blow-ups inside a step are reported as divergence at `(epoch, batch)`.
pub(crate) fn as_divergence(err: Error, epoch: usize, batch: usize) -> Error {
    match err {
        Error::NonFinite { .. } | Error::DegenerateEmbedding { .. } => Error::Divergence { epoch, batch },
        other => other,
    }
}

/// One cross-entropy step, `θ ← θ + step·∇CE`. Returns the pre-step loss.
pub(crate) fn ce_step(params: &mut ModelParameters, batch: &Batch, step: f64) -> Result<f64> {
    let tape = Tape::new();
    let vars = params.record(&tape);
    let x = tape.leaf(batch.features.clone());
    let z = params.encode_on(&tape, &vars, x)?;
    let logits = params.head_on(&tape, &vars, z)?;
    let loss = loss_ce(&tape, logits, &batch.labels)?;
    let value = tape.scalar_value(loss)?;
    let grads = tape.grad(loss, vars.vars())?;
    params.apply_update(&grads, step)?;
    Ok(value)
}

pub(crate) struct Timer(Instant);

impl Timer {
    pub(crate) fn start() -> Self {
        Timer(Instant::now())
    }

    pub(crate) fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}
