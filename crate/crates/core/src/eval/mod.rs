//! Accuracy reports, embedding geometry and membership inference.

mod geometry;
mod mia;
mod report;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelParameters;

pub use geometry::{centroids, embedding_geometry, geometry_csv, ClassCentroid, GeometryDiagnostics, SampleGeometry};
pub use mia::{
    attack_features, mia_member_rate, mia_train, mia_report, AttackModel, MiaReport, TrainedAttack, MIA_SET_CAP,
};
pub use report::{evaluate, AccuracyRow, EvaluationReport, Split};

/// Fraction of rows whose predicted class (lowest index on ties) equals the label.
pub fn accuracy(model: &ModelParameters, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptySet("accuracy over an empty view".into()));
    }
    let predictions = model.predict(data.features())?;
    let correct = predictions.iter().zip(data.labels()).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / data.len() as f64)
}
