use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{DataError, Dataset, Label};
use crate::linalg::Matrix;

/// Loads a labeled dataset. Every non-label column becomes a feature, in header order.
pub fn load_dataset_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset_csv(file, label_column)
}

/// Parses a finite decimal number. Rejects NaN/Inf spellings.
pub(crate) fn parse_finite(cell: &str) -> Option<f64> {
    let v: f64 = cell.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// Reads a dataset from any CSV source. Row numbers in errors are 1-based data rows.
pub fn read_dataset_csv(reader: impl Read, label_column: &str) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::MissingLabelColumn(label_column.to_string()))?;
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&j| j != label_idx).collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.len() != header.len() {
            return Err(DataError::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let raw_label = &record[label_idx];
        let label: Label = raw_label.parse().map_err(|_| DataError::UnknownLabel {
            row,
            value: raw_label.to_string(),
        })?;
        for &j in &feature_cols {
            let cell = &record[j];
            let v = parse_finite(cell).ok_or_else(|| DataError::BadNumber {
                row,
                column: header[j].clone(),
                value: cell.to_string(),
            })?;
            values.push(v);
        }
        labels.push(label);
    }
    let names: Vec<String> = feature_cols.iter().map(|&j| header[j].clone()).collect();
    let features = Matrix::from_vec(labels.len(), names.len(), values);
    Dataset::new(features, labels, names)
}

/// Writes `ds` with its feature columns followed by a `label` column.
pub fn write_dataset_csv(ds: &Dataset, mut out: impl Write) -> std::io::Result<()> {
    let mut header = ds.feature_names().join(",");
    header.push_str(",label\n");
    out.write_all(header.as_bytes())?;
    let mut line = String::new();
    for (row, label) in ds.features().iter_rows().zip(ds.labels()) {
        line.clear();
        for v in row {
            line.push_str(&v.to_string());
            line.push(',');
        }
        line.push_str(label.name());
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}
