use ndarray::Array2;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ssbench::bench::{run_cell, CellSpec};
use ssbench::datagen::{self, GenSpec};
use ssbench::methods::{self, FitConfig, FittedMethod, MethodKind, TuningGrid};
use ssbench::metrics::{self, CellResult};
use ssbench::nn::HyperParams;
use ssbench::reweight::{self, KernelConfig, WeightVector};

create_exception!(ssbench_py, SsbError, PyException);
create_exception!(ssbench_py, ConfigError, SsbError);
create_exception!(ssbench_py, CellError, SsbError);

fn to_py(e: ssbench::Error) -> PyErr {
    match e {
        ssbench::Error::Config(_) | ssbench::Error::Usage(_) => ConfigError::new_err(e.to_string()),
        other => SsbError::new_err(other.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows(x: &Array2<f64>) -> Vec<Vec<f64>> {
    x.outer_iter().map(|r| r.to_vec()).collect()
}

/// Rows of features with binary outcome `y` and selection indicator `s`.
#[pyclass(name = "Dataset", module = "ssbench_py")]
struct PyDataset(datagen::Dataset);

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        datagen::Dataset::load(path).map(PyDataset).map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(to_py)
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        rows(&self.0.x)
    }

    #[getter]
    fn y(&self) -> Vec<u8> {
        self.0.y.clone()
    }

    #[getter]
    fn s(&self) -> Vec<u8> {
        self.0.s.clone()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.0.n_features()
    }

    #[getter]
    fn nonselect_rate(&self) -> f64 {
        self.0.nonselect_rate()
    }

    #[getter]
    fn event_rate(&self) -> f64 {
        self.0.event_rate()
    }

    /// Provenance record as a JSON string.
    #[getter]
    fn provenance(&self) -> PyResult<String> {
        serde_json::to_string(&self.0.provenance).map_err(|e| SsbError::new_err(e.to_string()))
    }

    /// Stratified train/validation/test split.
    fn split(&self, seed: u64) -> PyResult<(PyDataset, PyDataset, PyDataset)> {
        let b = datagen::split(&self.0, seed).map_err(to_py)?;
        Ok((PyDataset(b.train), PyDataset(b.val), PyDataset(b.test)))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, features={}, event_rate={:.4}, nonselect_rate={:.4})",
            self.0.len(),
            self.0.n_features(),
            self.0.event_rate(),
            self.0.nonselect_rate()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (n_total=1000, n_features=25, event_rate=0.1, nonselect_rate=0.1, flip_rate=0.01, seed=0))]
fn generate_synthetic(
    n_total: usize,
    n_features: usize,
    event_rate: f64,
    nonselect_rate: f64,
    flip_rate: f64,
    seed: u64,
) -> PyResult<PyDataset> {
    let spec = GenSpec {
        n_total,
        n_features,
        event_rate,
        nonselect_rate,
        flip_rate,
        seed,
    };
    datagen::gen_synthetic(&spec).map(PyDataset).map_err(to_py)
}

#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    metrics::auc(&scores, &labels).map_err(to_py)
}

/// AUC overall and on the `s = 1` / `s = 0` slices; absent slices are `None`.
#[pyfunction]
fn subpop_auc<'py>(py: Python<'py>, scores: Vec<f64>, y: Vec<u8>, s: Vec<u8>) -> PyResult<Bound<'py, PyDict>> {
    let r = metrics::subpop_auc(&scores, &y, &s).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("overall", r.overall)?;
    d.set_item("selected", r.selected)?;
    d.set_item("nonselected", r.nonselected)?;
    Ok(d)
}

/// Importance weights with fitting diagnostics.
#[pyclass(name = "Weights", module = "ssbench_py", frozen)]
struct PyWeights(WeightVector);

#[pymethods]
impl PyWeights {
    #[getter]
    fn w(&self) -> Vec<f64> {
        self.0.w.clone()
    }

    #[getter]
    fn estimator(&self) -> &str {
        &self.0.estimator
    }

    #[getter]
    fn converged(&self) -> bool {
        self.0.converged
    }

    /// Objective value per iteration.
    #[getter]
    fn trace(&self) -> Vec<f64> {
        self.0.trace.clone()
    }

    #[getter]
    fn params<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for (k, v) in &self.0.params {
            d.set_item(k, v)?;
        }
        Ok(d)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Weights({}, n={}, converged={})", self.0.estimator, self.0.len(), self.0.converged)
    }
}

#[pyfunction]
fn ipw_weights(selection_probs: Vec<f64>, marginal: f64) -> PyResult<PyWeights> {
    reweight::ipw_weights(&selection_probs, marginal).map(PyWeights).map_err(to_py)
}

fn kernel_config(bandwidth: Option<f64>, b: f64, eps: Option<f64>, num_centers: Option<usize>, seed: u64) -> KernelConfig {
    KernelConfig {
        bandwidth,
        kmm_b: b,
        kmm_eps: eps,
        kliep_num_centers: num_centers,
        seed,
        ..KernelConfig::default()
    }
}

/// Kernel mean matching weights for `study` rows against `target` rows.
#[pyfunction]
#[pyo3(signature = (study, target, bandwidth=None, b=10.0, eps=None, seed=0))]
fn kmm_weights(
    study: Vec<Vec<f64>>,
    target: Vec<Vec<f64>>,
    bandwidth: Option<f64>,
    b: f64,
    eps: Option<f64>,
    seed: u64,
) -> PyResult<PyWeights> {
    let (study, target) = (matrix(study)?, matrix(target)?);
    let cfg = kernel_config(bandwidth, b, eps, None, seed);
    reweight::kmm_weights(study.view(), target.view(), &cfg).map(PyWeights).map_err(to_py)
}

/// KLIEP density-ratio weights for `study` rows against `target` rows.
#[pyfunction]
#[pyo3(signature = (study, target, bandwidth=None, num_centers=None, seed=0))]
fn kliep_weights(
    study: Vec<Vec<f64>>,
    target: Vec<Vec<f64>>,
    bandwidth: Option<f64>,
    num_centers: Option<usize>,
    seed: u64,
) -> PyResult<PyWeights> {
    let (study, target) = (matrix(study)?, matrix(target)?);
    let cfg = kernel_config(bandwidth, 10.0, None, num_centers, seed);
    reweight::kliep_weights(study.view(), target.view(), &cfg).map(PyWeights).map_err(to_py)
}

/// A trained bias-correction method.
#[pyclass(name = "FittedMethod", module = "ssbench_py", frozen)]
struct PyFittedMethod(FittedMethod);

#[pymethods]
impl PyFittedMethod {
    #[getter]
    fn method(&self) -> &'static str {
        self.0.kind.name()
    }

    /// Architecture and learning rate chosen during tuning.
    #[getter]
    fn choices(&self) -> &str {
        &self.0.choices
    }

    /// `(score, deferred, selection_score)` per row.
    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<(f64, bool, Option<f64>)>> {
        let x = matrix(x)?;
        let preds = methods::predict(&self.0, x.view()).map_err(to_py)?;
        Ok(preds.into_iter().map(|p| (p.score, p.deferred, p.selection_score)).collect())
    }

    /// Scores `test` and returns the cell metrics.
    fn evaluate<'py>(&self, py: Python<'py>, test: &PyDataset) -> PyResult<Bound<'py, PyDict>> {
        let preds = methods::predict(&self.0, test.0.x.view()).map_err(to_py)?;
        let m = methods::score_predictions(self.0.kind, &preds, &test.0.y, &test.0.s).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("auc_overall", m.auc_overall)?;
        d.set_item("auc_selected", m.auc_selected)?;
        d.set_item("auc_nonselected", m.auc_nonselected)?;
        d.set_item("auc_identification", m.auc_identification)?;
        d.set_item("deferral_rate", m.deferral_rate)?;
        Ok(d)
    }
}

/// Trains one method with a fixed architecture and learning rate.
#[pyfunction]
#[pyo3(signature = (method, train, val, hidden=vec![100], head=vec![50], learning_rate=5e-4, max_epochs=100, batch_size=64, patience=10, seed=0))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    method: &str,
    train: &PyDataset,
    val: &PyDataset,
    hidden: Vec<usize>,
    head: Vec<usize>,
    learning_rate: f64,
    max_epochs: usize,
    batch_size: usize,
    patience: usize,
    seed: u64,
) -> PyResult<PyFittedMethod> {
    let kind: MethodKind = method.parse().map_err(to_py)?;
    let hp = HyperParams {
        learning_rate,
        batch_size,
        max_epochs,
        patience,
        seed,
        ..HyperParams::default()
    };
    let cfg = FitConfig {
        grid: TuningGrid::single(hidden, head, learning_rate),
        ..FitConfig::default()
    };
    let (train, val) = (&train.0, &val.0);
    py.detach(|| methods::fit(kind, train, val, &hp, &cfg))
        .map(PyFittedMethod)
        .map_err(to_py)
}

fn result_dict<'py>(py: Python<'py>, r: &CellResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("method", r.method.name())?;
    d.set_item("dataset", &r.config.dataset)?;
    d.set_item("n_total", r.config.n_total)?;
    d.set_item("event_rate", r.config.event_rate)?;
    d.set_item("nonselect_rate", r.config.nonselect_rate)?;
    d.set_item("seed_index", r.config.seed_index)?;
    d.set_item("hparams", &r.config.hparams)?;
    d.set_item("auc_overall", r.auc_overall)?;
    d.set_item("auc_selected", r.auc_selected)?;
    d.set_item("auc_nonselected", r.auc_nonselected)?;
    d.set_item("auc_identification", r.auc_identification)?;
    d.set_item("deferral_rate", r.deferral_rate)?;
    d.set_item("wall_time", r.wall_time)?;
    Ok(d)
}

/// Runs one experiment cell described by a JSON object, as accepted by `ssb-bench run --config`.
#[pyfunction]
fn run_cell_json<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyDict>> {
    let cell = CellSpec::from_json(config).map_err(to_py)?;
    let result = py
        .detach(|| run_cell(&cell))
        .map_err(|f| CellError::new_err(f.to_string()))?;
    result_dict(py, &result)
}

#[pyfunction]
fn method_names() -> Vec<&'static str> {
    MethodKind::ALL.iter().map(|k| k.name()).collect()
}

#[pymodule]
fn ssbench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SsbError", m.py().get_type::<SsbError>())?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("CellError", m.py().get_type::<CellError>())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyWeights>()?;
    m.add_class::<PyFittedMethod>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(subpop_auc, m)?)?;
    m.add_function(wrap_pyfunction!(ipw_weights, m)?)?;
    m.add_function(wrap_pyfunction!(kmm_weights, m)?)?;
    m.add_function(wrap_pyfunction!(kliep_weights, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(run_cell_json, m)?)?;
    m.add_function(wrap_pyfunction!(method_names, m)?)?;
    Ok(())
}
