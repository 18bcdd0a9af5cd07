use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cell_seed;
use crate::error::{Error, Result};
use crate::methods::{FitConfig, MethodKind};
use crate::nn::HyperParams;

/// Environment variable overriding the configured worker count.
pub const THREADS_ENV: &str = "SSB_BENCH_THREADS";

fn default_features() -> usize {
    25
}

fn default_flip() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic {
        #[serde(default = "default_features")]
        n_features: usize,
        #[serde(default = "default_flip")]
        flip_rate: f64,
    },
    /// A real cohort; selection is injected per cell.
    Csv { path: String, outcome_column: String },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic {
            n_features: default_features(),
            flip_rate: default_flip(),
        }
    }
}

impl DatasetSource {
    pub fn default_id(&self) -> String {
        match self {
            DatasetSource::Synthetic { .. } => "synthetic".into(),
            DatasetSource::Csv { path, .. } => Path::new(path)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let hp = HyperParams::default();
        TrainingConfig {
            batch_size: hp.batch_size,
            max_epochs: hp.max_epochs,
            patience: hp.patience,
        }
    }
}

impl TrainingConfig {
    /// Learning rate comes from the tuning grid.
    pub fn hyper_params(&self, seed: u64) -> HyperParams {
        HyperParams {
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            ..HyperParams::default()
        }
        .with_seed(seed)
    }
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} {v} must lie in (0, 1)")))
    }
}

/// One experiment cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub dataset_id: String,
    #[serde(default)]
    pub dataset: DatasetSource,
    pub n_total: usize,
    pub event_rate: f64,
    pub nonselect_rate: f64,
    pub method: MethodKind,
    #[serde(default)]
    pub seed_index: u32,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub fit: FitConfig,
}

impl CellSpec {
    pub fn seed(&self) -> u64 {
        cell_seed(
            self.base_seed,
            &self.dataset_id,
            self.n_total,
            self.event_rate,
            self.nonselect_rate,
            self.seed_index,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_total < 10 {
            return Err(Error::Config(format!("n_total {} is below 10", self.n_total)));
        }
        check_rate("event_rate", self.event_rate)?;
        check_rate("nonselect_rate", self.nonselect_rate)?;
        self.training.hyper_params(0).validate().map_err(|e| Error::Config(e.to_string()))?;
        self.fit.grid.validate()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cell: CellSpec = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cell.validate()?;
        Ok(cell)
    }
}

fn default_num_seeds() -> u32 {
    10
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

/// A full experiment grid. See the README for the JSON schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub dataset: DatasetSource,
    /// Label used in result rows; defaults to `synthetic` or the CSV file stem.
    #[serde(default)]
    pub dataset_id: Option<String>,
    pub sizes: Vec<usize>,
    pub event_rates: Vec<f64>,
    pub nonselect_rates: Vec<f64>,
    pub methods: Vec<MethodKind>,
    /// Explicit seed indices; when absent, `0..num_seeds`.
    #[serde(default)]
    pub seeds: Option<Vec<u32>>,
    #[serde(default = "default_num_seeds")]
    pub num_seeds: u32,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub parallelism: Option<usize>,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn dataset_label(&self) -> String {
        self.dataset_id.clone().unwrap_or_else(|| self.dataset.default_id())
    }

    pub fn seed_indices(&self) -> Vec<u32> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.num_seeds).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |name: &str| Error::Config(format!("{name} must be nonempty"));
        if self.sizes.is_empty() {
            return Err(empty("sizes"));
        }
        if self.event_rates.is_empty() {
            return Err(empty("event_rates"));
        }
        if self.nonselect_rates.is_empty() {
            return Err(empty("nonselect_rates"));
        }
        if self.methods.is_empty() {
            return Err(empty("methods"));
        }
        if self.seed_indices().is_empty() {
            return Err(empty("seeds"));
        }
        if self.parallelism == Some(0) {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        self.cells().iter().try_for_each(CellSpec::validate)
    }

    /// Every cell in serialization order, duplicates in the lists removed.
    pub fn cells(&self) -> Vec<CellSpec> {
        let id = self.dataset_label();
        let mut sizes = self.sizes.clone();
        sizes.sort_unstable();
        sizes.dedup();
        let sorted_rates = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let events = sorted_rates(&self.event_rates);
        let nonselects = sorted_rates(&self.nonselect_rates);
        let mut methods = self.methods.clone();
        methods.sort();
        methods.dedup();
        let mut seeds = self.seed_indices();
        seeds.sort_unstable();
        seeds.dedup();

        let mut cells = Vec::new();
        for &n in &sizes {
            for &e in &events {
                for &ns in &nonselects {
                    for &method in &methods {
                        for &seed_index in &seeds {
                            cells.push(CellSpec {
                                dataset_id: id.clone(),
                                dataset: self.dataset.clone(),
                                n_total: n,
                                event_rate: e,
                                nonselect_rate: ns,
                                method,
                                seed_index,
                                base_seed: self.base_seed,
                                training: self.training.clone(),
                                fit: self.fit.clone(),
                            });
                        }
                    }
                }
            }
        }
        cells
    }
}
