//! Stop predicates for unlearning runs. Both comparisons are inclusive.

use super::record::TerminationCheck;
use crate::data::{Dataset, EvalSets, UnlearnTask};
use crate::error::{Error, Result};
use crate::eval::accuracy;
use crate::model::ModelParameters;

/// Class unlearning is done once accuracy on the class is no better than a
/// random guess among `num_classes`.
pub fn class_predicate(unlearn_accuracy: f64, num_classes: usize) -> bool {
    unlearn_accuracy <= 1.0 / num_classes as f64
}

/// Sample unlearning is done once accuracy on the unlearning samples has
/// dropped to the test accuracy.
pub fn sample_predicate(unlearn_accuracy: f64, test_accuracy: f64) -> bool {
    unlearn_accuracy <= test_accuracy
}

pub fn check_termination_class(model: &ModelParameters, eval: &Dataset, num_classes: usize) -> Result<bool> {
    if eval.is_empty() {
        return Err(Error::EmptySet("class termination set".into()));
    }
    Ok(class_predicate(accuracy(model, eval)?, num_classes))
}

pub fn check_termination_sample(model: &ModelParameters, unlearn_eval: &Dataset, test_eval: &Dataset) -> Result<bool> {
    if unlearn_eval.is_empty() || test_eval.is_empty() {
        return Err(Error::EmptySet("sample termination sets".into()));
    }
    Ok(sample_predicate(accuracy(model, unlearn_eval)?, accuracy(model, test_eval)?))
}

/// Evaluates the task's predicate on its evaluation sets.
pub fn evaluate_termination(model: &ModelParameters, task: &UnlearnTask) -> Result<TerminationCheck> {
    match task.eval_sets() {
        EvalSets::Class { unlearn_test } => {
            let acc = accuracy(model, unlearn_test)?;
            let c = task.num_classes();
            Ok(TerminationCheck {
                unlearn_accuracy: acc,
                threshold: 1.0 / c as f64,
                satisfied: class_predicate(acc, c),
            })
        }
        EvalSets::Sample { unlearn, test } => {
            let acc = accuracy(model, unlearn)?;
            let test_acc = accuracy(model, test)?;
            Ok(TerminationCheck {
                unlearn_accuracy: acc,
                threshold: test_acc,
                satisfied: sample_predicate(acc, test_acc),
            })
        }
    }
}
