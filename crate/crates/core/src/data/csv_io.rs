//! CSV datasets with header `f0,...,f{k-1},label`.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Reads a dataset; the class count is the largest label plus one.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let width = header.len();
    if width < 2 || header.get(width - 1) != Some("label") {
        return Err(parse_err(1, "header must be f0,...,f{k-1},label"));
    }
    for (i, name) in header.iter().take(width - 1).enumerate() {
        if name != format!("f{i}") {
            return Err(parse_err(1, format!("expected column f{i}, found {name:?}")));
        }
    }
    let dim = width - 1;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(parse_err(line, format!("expected {width} columns, found {}", record.len())));
        }
        for (col, cell) in record.iter().take(dim).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("column f{col}: {cell:?} is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column f{col}: {cell:?} is not finite")));
            }
            features.push(v);
        }
        let cell = &record[dim];
        let label: i64 = cell
            .parse()
            .map_err(|_| parse_err(line, format!("label {cell:?} is not an integer")))?;
        if label < 0 {
            return Err(parse_err(line, format!("label {label} is negative")));
        }
        labels.push(label as usize);
    }
    if labels.is_empty() {
        return Err(Error::EmptySet(format!("{} has no rows", path.display())));
    }
    let n = labels.len();
    let num_classes = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(Tensor::matrix(n, dim, features)?, labels, num_classes)
}

/// Writes raw features with shortest round-trip float formatting.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    let dim = dataset.dim();
    for i in 0..dim {
        out.push_str(&format!("f{i},"));
    }
    out.push_str("label\n");
    for (r, label) in dataset.labels().iter().enumerate() {
        for v in dataset.features().row(r) {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{label}\n"));
    }
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
