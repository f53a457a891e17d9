use serde::{Deserialize, Serialize};

use super::accuracy;
use crate::data::{TaskKind, UnlearnTask};
use crate::error::{Error, Result};
use crate::model::ModelParameters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// `D^u_tr`
    UnlearnTrain,
    /// `D^u_ts`
    UnlearnTest,
    /// `D^r_ts`
    RemainTest,
    /// `D_ts`
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub split: Split,
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    /// `accuracy - reference`
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub task: TaskKind,
    pub rows: Vec<AccuracyRow>,
}

impl EvaluationReport {
    pub fn get(&self, split: Split) -> Option<&AccuracyRow> {
        self.rows.iter().find(|r| r.split == split)
    }

    pub fn accuracy(&self, split: Split) -> Option<f64> {
        self.get(split).map(|r| r.accuracy)
    }

    /// True when every delta equals `accuracy - reference` exactly.
    pub fn deltas_consistent(&self) -> bool {
        self.rows.iter().all(|r| match (r.reference, r.delta) {
            (Some(reference), Some(delta)) => delta == r.accuracy - reference,
            (None, None) => true,
            _ => false,
        })
    }
}

/// Accuracy table for `model` on the task's splits, with deltas against
/// `reference` (normally the retrained model) when given.
///
/// Class tasks report `D^r_ts`, `D^u_tr`, `D^u_ts`; sample tasks `D_ts`, `D^u_tr`.
pub fn evaluate(model: &ModelParameters, task: &UnlearnTask, reference: Option<&ModelParameters>) -> Result<EvaluationReport> {
    let missing = |what: &str| Error::Validation(format!("class task lacks {what}"));
    let splits = match task.kind() {
        TaskKind::Class { .. } => vec![
            (Split::RemainTest, task.remain_test().ok_or_else(|| missing("D^r_ts"))?),
            (Split::UnlearnTrain, task.unlearn_train()),
            (Split::UnlearnTest, task.unlearn_test().ok_or_else(|| missing("D^u_ts"))?),
        ],
        TaskKind::Sample => vec![(Split::Test, task.test()), (Split::UnlearnTrain, task.unlearn_train())],
    };
    let rows = splits
        .into_iter()
        .map(|(split, data)| {
            let acc = accuracy(model, data)?;
            let reference = reference.map(|r| accuracy(r, data)).transpose()?;
            Ok(AccuracyRow {
                split,
                accuracy: acc,
                reference,
                delta: reference.map(|r| acc - r),
            })
        })
        .collect::<Result<_>>()?;
    Ok(EvaluationReport { task: task.kind(), rows })
}
