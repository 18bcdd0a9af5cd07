//! Experiment cells, grid sweeps and figure rendering.
//!
//! A cell is one (dataset, size, event rate, non-selection rate, method, seed index) point. Its
//! data, split and training seeds are derived from a hash of everything except the method, so
//! every method at a grid point sees the same rows and oracle, naive and tnet share one risk
//! network.

mod config;
mod plot;
mod sweep;

use std::path::Path;
use std::time::Instant;

use sha2::{Digest, Sha256};

pub use config::{CellSpec, DatasetSource, SweepConfig, TrainingConfig, THREADS_ENV};
pub use plot::{render_heatmap, render_summary, HeatmapValue, SummaryKind};
pub use sweep::{
    config_hash, load_manifest, resolve_parallelism, sweep, CellKey, CellRecord, CellStatus, RunManifest,
    SweepOutcome, MANIFEST_FILE, AGGREGATE_FILE, RESULTS_FILE,
};

use crate::datagen::{gen_synthetic, load_csv, semi_synthetic, split, Cohort, Dataset, GenSpec};
use crate::methods::{evaluate, fit, mix_seed, predict, Prediction};
use crate::metrics::{CellConfig, CellResult};

const SPLIT_TAG: u64 = 10;
const TRAIN_TAG: u64 = 11;

/// Seed shared by every method at one grid point and seed index.
pub fn cell_seed(base_seed: u64, dataset: &str, n_total: usize, event_rate: f64, nonselect_rate: f64, seed_index: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(base_seed.to_le_bytes());
    h.update((dataset.len() as u64).to_le_bytes());
    h.update(dataset.as_bytes());
    h.update((n_total as u64).to_le_bytes());
    h.update(event_rate.to_bits().to_le_bytes());
    h.update(nonselect_rate.to_bits().to_le_bytes());
    h.update(seed_index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest has 32 bytes"))
}

/// A cell that failed, with the pipeline stage it failed in.
#[derive(Clone, Debug, PartialEq)]
pub struct CellFailure {
    pub stage: String,
    pub message: String,
}

impl std::fmt::Display for CellFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.message)
    }
}

impl std::error::Error for CellFailure {}

fn stage<T>(name: &str, r: crate::Result<T>) -> Result<T, CellFailure> {
    r.map_err(|e| CellFailure {
        stage: name.to_string(),
        message: e.to_string(),
    })
}

/// Everything a cell produced, for callers that export predictions.
#[derive(Clone, Debug)]
pub struct CellRun {
    pub result: CellResult,
    pub test: Dataset,
    pub predictions: Vec<Prediction>,
}

pub(crate) fn load_cohort(source: &DatasetSource) -> crate::Result<Option<Cohort>> {
    match source {
        DatasetSource::Synthetic { .. } => Ok(None),
        DatasetSource::Csv { path, outcome_column } => load_csv(Path::new(path), outcome_column).map(Some),
    }
}

pub(crate) fn run_cell_on(cell: &CellSpec, cohort: Option<&Cohort>) -> Result<CellRun, CellFailure> {
    let started = Instant::now();
    let seed = cell.seed();
    let data = match (&cell.dataset, cohort) {
        (DatasetSource::Synthetic { n_features, flip_rate }, _) => gen_synthetic(&GenSpec {
            n_total: cell.n_total,
            n_features: *n_features,
            event_rate: cell.event_rate,
            nonselect_rate: cell.nonselect_rate,
            flip_rate: *flip_rate,
            seed,
        }),
        (DatasetSource::Csv { .. }, Some(c)) => {
            semi_synthetic(c, Some(cell.n_total), Some(cell.event_rate), cell.nonselect_rate, seed)
        }
        (DatasetSource::Csv { .. }, None) => match stage("data", load_cohort(&cell.dataset))? {
            Some(c) => semi_synthetic(&c, Some(cell.n_total), Some(cell.event_rate), cell.nonselect_rate, seed),
            None => unreachable!("csv sources always load a cohort"),
        },
    };
    let data = stage("data", data)?;
    let bundle = stage("split", split(&data, mix_seed(seed, SPLIT_TAG)))?;
    let hp = cell.training.hyper_params(mix_seed(seed, TRAIN_TAG));
    let fm = stage("fit", fit(cell.method, &bundle.train, &bundle.val, &hp, &cell.fit))?;
    let config = CellConfig {
        dataset: cell.dataset_id.clone(),
        n_total: cell.n_total,
        event_rate: cell.event_rate,
        nonselect_rate: cell.nonselect_rate,
        seed_index: cell.seed_index,
        hparams: String::new(),
    };
    let predictions = stage("evaluate", predict(&fm, bundle.test.x.view()))?;
    let mut result = stage("evaluate", evaluate(&fm, &bundle.test, config))?;
    result.wall_time = started.elapsed().as_secs_f64();
    Ok(CellRun {
        result,
        test: bundle.test,
        predictions,
    })
}

/// Generate or load, split, fit and evaluate one cell.
pub fn run_cell(cell: &CellSpec) -> Result<CellResult, CellFailure> {
    run_cell_detailed(cell).map(|r| r.result)
}

pub fn run_cell_detailed(cell: &CellSpec) -> Result<CellRun, CellFailure> {
    stage("config", cell.validate())?;
    run_cell_on(cell, None)
}
