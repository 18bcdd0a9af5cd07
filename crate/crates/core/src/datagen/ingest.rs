use std::fs::File;
use std::path::Path;

use ndarray::Array2;

use super::Cohort;
use crate::error::{Error, Result};

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "N/A" | "NaN" | "nan" | "?")
}

/// Reads a comma-separated cohort with a header row.
///
/// Every column other than `outcome_column` is a numeric feature. Rows with a missing cell are
/// dropped; any other non-numeric cell is a parse error. The outcome must be 0 or 1.
pub fn load_csv(path: impl AsRef<Path>, outcome_column: &str) -> Result<Cohort> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut cohort = read_cohort(file, outcome_column)?;
    cohort.source = path.display().to_string();
    log::info!(
        "loaded {}: n = {}, d = {}, event rate {:.3}",
        cohort.source,
        cohort.len(),
        cohort.n_features(),
        cohort.event_rate()
    );
    Ok(cohort)
}

pub(crate) fn read_cohort<R: std::io::Read>(input: R, outcome_column: &str) -> Result<Cohort> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(input);
    let header = reader.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Schema("file has no header row".into()));
    }
    let outcome = header
        .iter()
        .position(|h| h.trim() == outcome_column)
        .ok_or_else(|| Error::Schema(format!("outcome column `{outcome_column}` not found")))?;
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&j| j != outcome).collect();
    if feature_cols.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }

    let mut values = Vec::new();
    let mut y = Vec::new();
    let mut dropped = 0usize;
    'rows: for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        if rec.iter().any(is_missing) {
            dropped += 1;
            continue 'rows;
        }
        let parse = |j: usize| -> Result<f64> {
            let cell = rec[j].trim();
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row: line,
                    column: header[j].to_string(),
                    value: cell.to_string(),
                })
        };
        let label = parse(outcome)?;
        if label != 0.0 && label != 1.0 {
            return Err(Error::Schema(format!(
                "outcome `{outcome_column}` must be 0 or 1, found {label} on row {line}"
            )));
        }
        for &j in &feature_cols {
            values.push(parse(j)?);
        }
        y.push(label as u8);
    }
    if y.is_empty() {
        return Err(Error::Schema("no complete data rows".into()));
    }
    if dropped > 0 {
        log::info!("dropped {dropped} rows with missing values");
    }
    let x = Array2::from_shape_vec((y.len(), feature_cols.len()), values)
        .map_err(|e| Error::Schema(e.to_string()))?;
    Ok(Cohort {
        x,
        y,
        feature_names: Some(feature_cols.iter().map(|&j| header[j].to_string()).collect()),
        source: String::new(),
    })
}
