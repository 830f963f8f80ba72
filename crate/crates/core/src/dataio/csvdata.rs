use std::io::Write;
use std::path::Path;

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Column layout of a dataset CSV: `features` numeric columns then one integer label.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvSchema {
    pub features: usize,
    pub header: bool,
    /// Class count; inferred as `max label + 1` when absent.
    pub classes: Option<usize>,
    pub normalize: bool,
}

impl CsvSchema {
    pub fn new(features: usize) -> Self {
        CsvSchema {
            features,
            header: false,
            classes: None,
            normalize: true,
        }
    }
}

/// Parses CSV text; `origin` names the source in error messages.
pub fn parse_csv_dataset(text: &[u8], schema: &CsvSchema, origin: &str) -> Result<Dataset> {
    let d = schema.features;
    if d == 0 {
        return Err(Error::Config("csv schema needs at least one feature column".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Format(format!("{origin}: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != d + 1 {
            return Err(Error::Format(format!(
                "{origin}: line {line}: expected {} columns, found {}",
                d + 1,
                rec.len()
            )));
        }
        for (col, cell) in rec.iter().take(d).enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Format(format!("{origin}: line {line}, column {}: `{cell}` is not a number", col + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::Format(format!("{origin}: line {line}, column {}: non-finite value", col + 1)));
            }
            data.push(v);
        }
        let cell = &rec[d];
        let y: usize = cell.parse().map_err(|_| {
            Error::Format(format!("{origin}: line {line}, column {}: `{cell}` is not a class label", d + 1))
        })?;
        if let Some(c) = schema.classes {
            if y >= c {
                return Err(Error::Format(format!("{origin}: line {line}: label {y} outside [0, {c})")));
            }
        }
        labels.push(y);
    }
    if labels.is_empty() {
        return Err(Error::Format(format!("{origin}: no data rows")));
    }
    let classes = schema
        .classes
        .unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
    let n = labels.len();
    let ds = Dataset::new(origin.to_string(), Tensor::new([n, d], data)?, labels, classes)?;
    if schema.normalize {
        ds.normalized()
    } else {
        Ok(ds)
    }
}

pub fn load_csv_dataset(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_csv_dataset(&text, schema, &path.display().to_string())
}

/// Writes features (shortest round-trip decimal form) and labels, one row per sample.
pub fn write_csv_dataset(path: &Path, dataset: &Dataset, header: bool) -> Result<()> {
    let mut out = String::new();
    if header {
        let cols: Vec<String> = (0..dataset.dim()).map(|j| format!("f{j}")).collect();
        out.push_str(&cols.join(","));
        out.push_str(",label\n");
    }
    for i in 0..dataset.len() {
        for v in dataset.features().row(i) {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{}\n", dataset.labels()[i]));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
