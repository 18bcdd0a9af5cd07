use std::collections::HashMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{SweepConfig, THREADS_ENV};
use super::{load_cohort, run_cell_on, CellFailure, CellSpec};
use crate::error::{Error, Result};
use crate::methods::MethodKind;
use crate::metrics::{aggregate, write_aggregate_csv, write_cells_csv, CellResult};

pub const RESULTS_FILE: &str = "results.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_FLUSH: Duration = Duration::from_secs(2);

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub dataset: String,
    pub n_total: usize,
    /// Rates as written by `f64`'s shortest round-trip formatting.
    pub event_rate: String,
    pub nonselect_rate: String,
    pub method: MethodKind,
    pub seed_index: u32,
}

impl CellKey {
    pub fn of(cell: &CellSpec) -> Self {
        CellKey {
            dataset: cell.dataset_id.clone(),
            n_total: cell.n_total,
            event_rate: cell.event_rate.to_string(),
            nonselect_rate: cell.nonselect_rate.to_string(),
            method: cell.method,
            seed_index: cell.seed_index,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub key: CellKey,
    pub seed: u64,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<CellResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub total_cells: usize,
    pub finished: bool,
    pub artifacts: HashMap<String, String>,
    pub cells: Vec<CellRecord>,
}

impl RunManifest {
    pub fn count(&self, status: CellStatus) -> usize {
        self.cells.iter().filter(|c| c.status == status).count()
    }

    pub fn done_results(&self) -> Vec<CellResult> {
        self.cells.iter().filter_map(|c| c.result.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub output_dir: PathBuf,
    pub total: usize,
    /// Cells executed in this invocation (the rest were carried over from a resumed manifest).
    pub ran: usize,
    pub done: usize,
    pub failed: usize,
}

/// SHA-256 over the JSON form of everything that affects results (not the output directory or
/// worker count).
pub fn config_hash(cfg: &SweepConfig) -> String {
    let mut canonical = cfg.clone();
    canonical.output_dir = PathBuf::new();
    canonical.parallelism = None;
    let text = serde_json::to_string(&canonical).expect("config serializes");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Explicit argument, then `SSB_BENCH_THREADS`, then the configured value, then the core count.
pub fn resolve_parallelism(explicit: Option<usize>, configured: Option<usize>) -> Result<usize> {
    if let Some(n) = explicit {
        return if n == 0 { Err(Error::Config("thread count must be at least 1".into())) } else { Ok(n) };
    }
    if let Ok(v) = std::env::var(THREADS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        };
    }
    Ok(configured.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<RunManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn save_manifest(path: &Path, m: &RunManifest) -> Result<()> {
    write_atomic(path, serde_json::to_string_pretty(m)?.as_bytes())
}

fn run_guarded(cell: &CellSpec, cohort: Option<&crate::datagen::Cohort>) -> std::result::Result<CellResult, CellFailure> {
    match catch_unwind(AssertUnwindSafe(|| run_cell_on(cell, cohort))) {
        Ok(r) => r.map(|run| run.result),
        Err(panic) => Err(CellFailure {
            stage: "panic".into(),
            message: panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "worker panicked".into()),
        }),
    }
}

/// Runs every cell of `cfg` on at most `parallelism` workers and writes `results.csv`,
/// `aggregate.csv` and `manifest.json` into the output directory.
///
/// Result rows are written in cell-key order, so the CSV bytes do not depend on scheduling.
/// With `resume`, cells already done in an existing manifest for the same configuration are
/// kept and only pending or failed cells run.
pub fn sweep(cfg: &SweepConfig, parallelism: usize, resume: bool) -> Result<SweepOutcome> {
    cfg.validate()?;
    if parallelism == 0 {
        return Err(Error::Config("parallelism must be at least 1".into()));
    }
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let manifest_path = out.join(MANIFEST_FILE);
    let hash = config_hash(cfg);
    let cells = cfg.cells();

    let mut carried: HashMap<CellKey, CellRecord> = HashMap::new();
    if resume && manifest_path.exists() {
        let old = load_manifest(&manifest_path)?;
        if old.config_hash != hash {
            return Err(Error::Config(format!(
                "{} was written for a different configuration",
                manifest_path.display()
            )));
        }
        for rec in old.cells {
            if rec.status == CellStatus::Done && rec.result.is_some() {
                carried.insert(rec.key.clone(), rec);
            }
        }
    }

    let mut records: Vec<CellRecord> = cells
        .iter()
        .map(|c| {
            let key = CellKey::of(c);
            carried.remove(&key).unwrap_or(CellRecord {
                key,
                seed: c.seed(),
                status: CellStatus::Pending,
                stage: None,
                error: None,
                wall_time: None,
                result: None,
            })
        })
        .collect();
    let todo: Vec<usize> = (0..records.len())
        .filter(|&i| records[i].status != CellStatus::Done)
        .collect();
    log::info!(
        "sweep: {} cells ({} carried over, {} to run) on {} workers",
        cells.len(),
        cells.len() - todo.len(),
        todo.len(),
        parallelism
    );

    let mut artifacts = HashMap::new();
    artifacts.insert("results".to_string(), RESULTS_FILE.to_string());
    artifacts.insert("aggregate".to_string(), AGGREGATE_FILE.to_string());
    let mut manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hash,
        total_cells: cells.len(),
        finished: false,
        artifacts,
        cells: Vec::new(),
    };
    manifest.cells = records.clone();
    save_manifest(&manifest_path, &manifest)?;

    let cohort = load_cohort(&cfg.dataset)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let (tx, rx) = mpsc::channel::<(usize, std::result::Result<CellResult, CellFailure>)>();

    std::thread::scope(|scope| -> Result<()> {
        let cells = &cells;
        let todo = &todo;
        let cohort = cohort.as_ref();
        scope.spawn(move || {
            pool.install(|| {
                todo.par_iter().for_each_with(tx, |tx, &i| {
                    let _ = tx.send((i, run_guarded(&cells[i], cohort)));
                });
            });
        });
        let mut last_flush = Instant::now();
        for (i, outcome) in rx {
            let rec = &mut records[i];
            match outcome {
                Ok(result) => {
                    rec.status = CellStatus::Done;
                    rec.stage = None;
                    rec.error = None;
                    rec.wall_time = Some(result.wall_time);
                    rec.result = Some(result);
                }
                Err(f) => {
                    log::warn!("cell {:?} failed: {f}", rec.key);
                    rec.status = CellStatus::Failed;
                    rec.stage = Some(f.stage);
                    rec.error = Some(f.message);
                    rec.result = None;
                }
            }
            if last_flush.elapsed() >= MANIFEST_FLUSH {
                manifest.cells = records.clone();
                save_manifest(&manifest_path, &manifest)?;
                last_flush = Instant::now();
            }
        }
        Ok(())
    })?;

    let results: Vec<CellResult> = records.iter().filter_map(|r| r.result.clone()).collect();
    let mut csv = Vec::new();
    write_cells_csv(&results, &mut csv)?;
    write_atomic(&out.join(RESULTS_FILE), &csv)?;
    let mut agg = Vec::new();
    write_aggregate_csv(&aggregate(&results), &mut agg)?;
    write_atomic(&out.join(AGGREGATE_FILE), &agg)?;

    manifest.cells = records;
    manifest.finished = true;
    save_manifest(&manifest_path, &manifest)?;
    Ok(SweepOutcome {
        output_dir: out,
        total: manifest.total_cells,
        ran: todo.len(),
        done: manifest.count(CellStatus::Done),
        failed: manifest.count(CellStatus::Failed),
    })
}
