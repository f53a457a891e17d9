use serde::{Deserialize, Serialize};

use super::EngineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Train,
    Contrastive,
    Retrain,
    Finetune,
    Neggrad,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Train => "train",
            Method::Contrastive => "contrastive",
            Method::Retrain => "retrain",
            Method::Finetune => "finetune",
            Method::Neggrad => "neggrad",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Method::Train),
            "contrastive" => Ok(Method::Contrastive),
            "retrain" => Ok(Method::Retrain),
            "finetune" => Ok(Method::Finetune),
            "neggrad" => Ok(Method::Neggrad),
            other => Err(format!(
                "unknown method {other:?} (expected contrastive, retrain, finetune or neggrad)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationReason {
    ConditionMet,
    EpochCap,
    Error,
}

/// Accuracies seen by one termination check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminationCheck {
    /// Accuracy on the unlearning evaluation set.
    pub unlearn_accuracy: f64,
    /// `1/C` for class tasks, test-subset accuracy for sample tasks.
    pub threshold: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub gradient_steps: usize,
    /// Mean of the optimized objective over the epoch's steps.
    pub mean_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_ul_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_ce_loss: Option<f64>,
    /// Steps in which no anchor had the sets its loss variant needs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped_anchor_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub termination_check: Option<TerminationCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub config: EngineConfig,
    pub epochs: Vec<EpochMetrics>,
    pub duration_seconds: f64,
    pub termination_reason: TerminationReason,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub batches_processed: usize,
    pub gradient_steps: usize,
}

impl RunRecord {
    pub(crate) fn new(method: Method, config: &EngineConfig) -> Self {
        RunRecord {
            method,
            config: config.clone(),
            epochs: Vec::new(),
            duration_seconds: 0.0,
            termination_reason: TerminationReason::EpochCap,
            detail: None,
            batches_processed: 0,
            gradient_steps: 0,
        }
    }
}
