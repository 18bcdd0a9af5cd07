use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::fit::{predict, FittedMethod, Prediction};
use super::MethodKind;
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{auc_or_absent, subpop_auc, CellConfig, CellResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceMetrics {
    pub auc_overall: Option<f64>,
    pub auc_selected: Option<f64>,
    pub auc_nonselected: Option<f64>,
    pub auc_identification: Option<f64>,
    pub deferral_rate: f64,
}

/// Metrics from predictions and ground truth.
///
/// The evaluation set is the `s = 1` slice for oracle, the non-deferred rows for identification
/// methods and every row otherwise. Selected and non-selected AUCs are slices of that set.
/// Identification AUC ranks the selection score against `s` over all rows.
pub fn score_predictions(kind: MethodKind, preds: &[Prediction], y: &[u8], s: &[u8]) -> Result<SliceMetrics> {
    if preds.len() != y.len() || y.len() != s.len() {
        return Err(Error::DimensionMismatch {
            expected: preds.len(),
            actual: y.len().min(s.len()),
        });
    }
    let keep: Vec<usize> = (0..preds.len())
        .filter(|&i| match kind {
            MethodKind::Oracle => s[i] == 1,
            _ => !preds[i].deferred,
        })
        .collect();
    let scores: Vec<f64> = keep.iter().map(|&i| preds[i].score).collect();
    let ys: Vec<u8> = keep.iter().map(|&i| y[i]).collect();
    let ss: Vec<u8> = keep.iter().map(|&i| s[i]).collect();
    let slices = subpop_auc(&scores, &ys, &ss)?;

    let auc_identification = if preds.iter().all(|p| p.selection_score.is_some()) && !preds.is_empty() {
        let sel: Vec<f64> = preds.iter().map(|p| p.selection_score.unwrap()).collect();
        auc_or_absent(&sel, s)
    } else {
        None
    };
    let deferred = preds.iter().filter(|p| p.deferred).count();
    Ok(SliceMetrics {
        auc_overall: slices.overall,
        auc_selected: slices.selected,
        auc_nonselected: slices.nonselected,
        auc_identification,
        deferral_rate: if preds.is_empty() { 0.0 } else { deferred as f64 / preds.len() as f64 },
    })
}

/// Predicts on `test` and scores the result. An empty `config.hparams` is filled with the
/// method's tuned choices.
pub fn evaluate(fm: &FittedMethod, test: &Dataset, mut config: CellConfig) -> Result<CellResult> {
    let preds = predict(fm, test.x.view())?;
    let m = score_predictions(fm.kind, &preds, &test.y, &test.s)?;
    if config.hparams.is_empty() {
        config.hparams = fm.choices.clone();
    }
    Ok(CellResult {
        method: fm.kind,
        config,
        auc_overall: m.auc_overall,
        auc_selected: m.auc_selected,
        auc_nonselected: m.auc_nonselected,
        auc_identification: m.auc_identification,
        deferral_rate: m.deferral_rate,
        wall_time: 0.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub row_id: usize,
    pub score: f64,
    pub selection_score: Option<f64>,
    pub deferred: bool,
    pub y: u8,
    pub s: u8,
}

impl PredictionRow {
    pub fn prediction(&self) -> Prediction {
        Prediction {
            score: self.score,
            deferred: self.deferred,
            selection_score: self.selection_score,
        }
    }
}

/// Columns `row_id,score,selection_score,deferred,y,s`; an absent selection score is empty.
pub fn write_predictions_csv<W: Write>(preds: &[Prediction], test: &Dataset, out: W) -> Result<()> {
    if preds.len() != test.len() {
        return Err(Error::DimensionMismatch {
            expected: test.len(),
            actual: preds.len(),
        });
    }
    let mut w = csv::Writer::from_writer(out);
    for (i, p) in preds.iter().enumerate() {
        w.serialize(PredictionRow {
            row_id: test.row_ids[i],
            score: p.score,
            selection_score: p.selection_score,
            deferred: p.deferred,
            y: test.y[i],
            s: test.s[i],
        })?;
    }
    w.flush().map_err(|e| Error::io("<predictions csv>", e))?;
    Ok(())
}

pub fn read_predictions_csv<R: Read>(input: R) -> Result<Vec<PredictionRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
