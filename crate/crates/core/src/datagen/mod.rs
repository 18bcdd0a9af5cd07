//! Datasets, generators and splits.
//!
//! A [`Dataset`] always carries the true outcome of every row, including the non-selected ones.
//! Methods must only read `y` where `s == 1` while fitting; evaluation uses all of it.

mod calibrate;
mod ingest;
mod semisynthetic;
mod split;
mod synthetic;

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use calibrate::calibrate_threshold;
pub use ingest::load_csv;
pub use semisynthetic::{
    inject_bias, inject_bias_with, selection_scores, semi_synthetic, subsample_event_rate,
    SelectionMode,
};
pub use split::{split, SplitBundle, Standardizer};
pub use synthetic::{gen_synthetic, GenSpec, SyntheticParams};

/// Record of how a dataset was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic {
        spec: GenSpec,
        params: SyntheticParams,
        /// Rows drawn before the stratified subsample.
        pool_size: usize,
    },
    SemiSynthetic {
        source: String,
        projection: Vec<f64>,
        nonselect_rate: f64,
        mode: SelectionMode,
        seed: u64,
    },
    File {
        path: String,
    },
}

/// Features and binary outcomes without a selection variable.
#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    pub x: Array2<f64>,
    pub y: Vec<u8>,
    pub feature_names: Option<Vec<String>>,
    pub source: String,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn event_rate(&self) -> f64 {
        rate(&self.y)
    }

    pub fn subset(&self, idx: &[usize]) -> Cohort {
        Cohort {
            x: self.x.select(Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            source: self.source.clone(),
        }
    }
}

pub(crate) fn rate(v: &[u8]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().filter(|&&b| b == 1).count() as f64 / v.len() as f64
}

/// Features, outcomes and selection flags with row-aligned identifiers.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<u8>,
    pub s: Vec<u8>,
    pub feature_names: Option<Vec<String>>,
    /// Position of each row in the dataset it was first generated or loaded as.
    pub row_ids: Vec<usize>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<u8>, s: Vec<u8>, provenance: Provenance) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n || s.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: y.len().min(s.len()),
            });
        }
        if y.iter().chain(&s).any(|&b| b > 1) {
            return Err(Error::InvalidInput("y and s must be 0/1".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("features must be finite".into()));
        }
        Ok(Dataset {
            x,
            y,
            s,
            feature_names: None,
            row_ids: (0..n).collect(),
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            s: idx.iter().map(|&i| self.s[i]).collect(),
            feature_names: self.feature_names.clone(),
            row_ids: idx.iter().map(|&i| self.row_ids[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn selected_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.s[i] == 1).collect()
    }

    pub fn nonselected_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.s[i] == 0).collect()
    }

    pub fn nonselect_rate(&self) -> f64 {
        1.0 - rate(&self.s)
    }

    /// Event rate among selected rows.
    pub fn selected_event_rate(&self) -> f64 {
        let ys: Vec<u8> = self.selected_indices().iter().map(|&i| self.y[i]).collect();
        rate(&ys)
    }

    pub fn event_rate(&self) -> f64 {
        rate(&self.y)
    }

    pub fn y_f64(&self) -> Array1<f64> {
        self.y.iter().map(|&v| v as f64).collect()
    }

    pub fn s_f64(&self) -> Array1<f64> {
        self.s.iter().map(|&v| v as f64).collect()
    }

    /// CSV with columns `feature_0 … feature_{d-1}, y, s`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.n_features()).map(|j| format!("feature_{j}")).collect();
        header.push("y".into());
        header.push("s".into());
        w.write_record(&header)?;
        for (i, row) in self.x.outer_iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(self.y[i].to_string());
            rec.push(self.s[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<dataset csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, path: &str) -> Result<Dataset> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let d = header.len().checked_sub(2).ok_or_else(|| {
            Error::Schema("dataset CSV needs feature columns plus y and s".into())
        })?;
        if &header[d] != "y" || &header[d + 1] != "s" {
            return Err(Error::Schema("last two columns must be `y` and `s`".into()));
        }
        let mut vals = Vec::new();
        let (mut y, mut s) = (Vec::new(), Vec::new());
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |j: usize| -> Result<f64> {
                rec[j].trim().parse::<f64>().map_err(|_| Error::Parse {
                    row: row + 2,
                    column: header[j].to_string(),
                    value: rec[j].to_string(),
                })
            };
            for j in 0..d {
                vals.push(parse(j)?);
            }
            y.push(parse(d)? as u8);
            s.push(parse(d + 1)? as u8);
        }
        let x = Array2::from_shape_vec((y.len(), d), vals)
            .map_err(|e| Error::Schema(e.to_string()))?;
        Dataset::new(x, y, s, Provenance::File { path: path.into() })
    }

    /// Writes `<path>` as CSV and `<path>.provenance.json` next to it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))?;
        let sidecar = provenance_path(path);
        let json = serde_json::to_vec_pretty(&self.provenance)?;
        fs::write(&sidecar, json).map_err(|e| Error::io(sidecar, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut ds = Dataset::read_csv(bytes.as_slice(), &path.display().to_string())?;
        let sidecar = provenance_path(path);
        if let Ok(json) = fs::read(&sidecar) {
            ds.provenance = serde_json::from_slice(&json)?;
        }
        Ok(ds)
    }
}

pub fn provenance_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".provenance.json");
    name.into()
}
