//! Contrastive machine unlearning at desk scale.
//!
//! A classifier `F = H(E(x))` is trained with cross-entropy; unlearning then
//! contrasts the embeddings of the samples to forget against batches of
//! remaining samples, pushing them away from their own class and toward the
//! others, while a cross-entropy term on the remaining batch restores what
//! the contrast disturbs. Runs stop as soon as the task's accuracy-based
//! termination predicate holds.
//!
//! Modules:
//!
//! - [`numerics`]: tensors, the differentiation tape, finite differences
//! - [`model`]: MLP encoder with unit-norm embeddings, linear head, checkpoints
//! - [`data`]: synthetic and CSV datasets, unlearning tasks, batching
//! - [`losses`]: cross-entropy and the sample/class contrastive unlearning losses
//! - [`engine`]: training, contrastive unlearning and the retrain/finetune/neggrad baselines
//! - [`eval`]: accuracy reports, embedding geometry and membership inference

pub mod data;
pub mod engine;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod rng;

pub use error::{Error, Result};
